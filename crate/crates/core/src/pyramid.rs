//! Multi-scale fusion: the five stage maps are merged into one map at the
//! resolution of the deepest stage by repeatedly halving the running map
//! with a fixed low-pass filter and concatenating the next stage.

use ndarray::{concatenate, Array2, Array3, ArrayView3, Axis};

use crate::backbone::{FeaturePyramid, STAGE_COUNT};
use crate::error::{Error, Result};
use crate::filter::{correlate_channels, reflect_index};
use crate::scalar::Real;

/// Identifier of the downsampling filter, recorded in configuration hashes.
pub const DOWNSAMPLE_KERNEL_ID: &str = "binomial3x3/stride2/reflect1";

/// A `C x H x W` map plus the channel range each stage occupies.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedFeatureMap<T> {
    pub data: Array3<T>,
    /// `(offset, length)` per stage, in stage order, covering `0..C`.
    pub layer_blocks: Vec<(usize, usize)>,
}

impl<T: Real> FusedFeatureMap<T> {
    pub fn new(data: Array3<T>, layer_blocks: Vec<(usize, usize)>) -> Result<Self> {
        let mut next = 0;
        for &(offset, len) in &layer_blocks {
            if offset != next || len == 0 {
                return Err(Error::IncompatibleShapes(format!(
                    "layer blocks {layer_blocks:?} do not partition the channels"
                )));
            }
            next += len;
        }
        if next != data.dim().0 {
            return Err(Error::IncompatibleShapes(format!(
                "layer blocks cover {next} channels, map has {}",
                data.dim().0
            )));
        }
        Ok(Self { data, layer_blocks })
    }

    /// Wrap a map as a single block.
    pub fn single_block(data: Array3<T>) -> Self {
        let c = data.dim().0;
        Self {
            data,
            layer_blocks: vec![(0, c)],
        }
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }
}

/// The normalized 3x3 binomial kernel `[1,2,1]^T [1,2,1] / 16`.
pub fn binomial_kernel<T: Real>() -> Array2<T> {
    let taps = [1.0, 2.0, 1.0];
    Array2::from_shape_fn((3, 3), |(y, x)| T::lit(taps[y] * taps[x] / 16.0))
}

/// Halve a `C x H x W` map to `C x ceil(H/2) x ceil(W/2)`.
pub fn downsample<T: Real>(feature: ArrayView3<'_, T>) -> Result<Array3<T>> {
    let (_, h, w) = feature.dim();
    if h < 2 || w < 2 {
        return Err(Error::DimensionTooSmall {
            height: h,
            width: w,
        });
    }
    Ok(correlate_channels(
        feature,
        binomial_kernel::<T>().view(),
        2,
    ))
}

/// Crop or mirror-extend by at most one row/column so `map` matches `(h, w)`.
fn align<T: Real>(map: Array3<T>, h: usize, w: usize) -> Array3<T> {
    let (c, mh, mw) = map.dim();
    if (mh, mw) == (h, w) {
        return map;
    }
    Array3::from_shape_fn((c, h, w), |(ch, y, x)| {
        map[(
            ch,
            reflect_index(y as isize, mh),
            reflect_index(x as isize, mw),
        )]
    })
}

/// Merge the pyramid: `D(F1) ++ F2`, halve, `++ F3`, ... `++ F5`.
///
/// The halved running map may differ from the next stage by one row or
/// column when the backbone pads differently from the ceil convention; it
/// is then cropped or mirror-extended. Larger mismatches are rejected.
pub fn fuse_pyramid<T: Real>(pyramid: &FeaturePyramid<T>) -> Result<FusedFeatureMap<T>> {
    if pyramid.stages.len() != STAGE_COUNT {
        return Err(Error::StageCount {
            expected: STAGE_COUNT,
            got: pyramid.stages.len(),
        });
    }
    let mut blocks = Vec::with_capacity(STAGE_COUNT);
    let mut fused = pyramid.stages[0].clone();
    blocks.push((0, fused.dim().0));
    for (i, stage) in pyramid.stages.iter().enumerate().skip(1) {
        let (sc, sh, sw) = stage.dim();
        let halved = downsample(fused.view())?;
        let (_, dh, dw) = halved.dim();
        if dh.abs_diff(sh) > 1 || dw.abs_diff(sw) > 1 {
            return Err(Error::IncompatibleShapes(format!(
                "stage {} is {sh}x{sw} but the halved stage {} map is {dh}x{dw}",
                i + 1,
                i
            )));
        }
        let halved = align(halved, sh, sw);
        let offset = halved.dim().0;
        fused = concatenate(Axis(0), &[halved.view(), stage.view()])
            .expect("spatial dims aligned above");
        blocks.push((offset, sc));
    }
    FusedFeatureMap::new(fused, blocks)
}
