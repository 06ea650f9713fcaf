//! ONNX-backed feature extraction through `tract`.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, Mutex};

use ndarray::{Array3, ArrayView3};
use prost::Message;
use sha2::{Digest, Sha256};
use tract_onnx::pb;
use tract_onnx::prelude::*;

use super::synthetic::SyntheticNet;
use super::{BackboneHandle, BackboneManifest, Engine, PreprocessSpec, STAGE_COUNT};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square input side used to read stage shapes off the graph at load time.
const PROBE_SIDE: usize = 512;

type Plan = Arc<TypedRunnableModel>;

pub(crate) struct OnnxEngine {
    model: InferenceModel,
    plans: Mutex<HashMap<(usize, usize), Plan>>,
}

fn invalid(e: impl std::fmt::Display) -> Error {
    Error::InvalidModel(e.to_string())
}

/// Load an ONNX backbone, reading the stage outputs and preprocessing from
/// the sidecar manifest at `manifest_path`.
pub fn load_backbone_with_manifest(
    model_path: &Path,
    manifest_path: &Path,
) -> Result<BackboneHandle> {
    let manifest = BackboneManifest::from_path(manifest_path)?;
    load_backbone(model_path, &manifest.stage_outputs, manifest.preprocess())
}

/// Load an ONNX backbone exposing the five named graph values as its pyramid.
pub fn load_backbone(
    model_path: &Path,
    stage_outputs: &[String],
    preprocess: PreprocessSpec,
) -> Result<BackboneHandle> {
    if stage_outputs.len() != STAGE_COUNT {
        return Err(Error::StageCount {
            expected: STAGE_COUNT,
            got: stage_outputs.len(),
        });
    }
    preprocess.validate()?;
    if !model_path.is_file() {
        return Err(Error::FileNotFound(model_path.to_path_buf()));
    }
    let bytes = std::fs::read(model_path)?;
    let model_sha256 = hex::encode(Sha256::digest(&bytes));

    let proto = pb::ModelProto::decode(bytes.as_slice()).map_err(invalid)?;
    let graph = proto
        .graph
        .as_ref()
        .ok_or_else(|| invalid("model has no graph"))?;
    let known: HashSet<&str> = graph
        .node
        .iter()
        .flat_map(|n| n.output.iter())
        .chain(graph.input.iter().map(|i| &i.name))
        .map(String::as_str)
        .collect();
    if let Some(missing) = stage_outputs.iter().find(|s| !known.contains(s.as_str())) {
        return Err(Error::MissingOutput(missing.clone()));
    }

    let mut model = tract_onnx::onnx()
        .model_for_proto_model(&proto)
        .map_err(invalid)?;
    if model.inputs.len() != 1 {
        return Err(invalid(format!(
            "expected one graph input, found {}",
            model.inputs.len()
        )));
    }
    let outlets = stage_outputs
        .iter()
        .map(|name| {
            model
                .find_outlet_label(name)
                .ok_or_else(|| Error::MissingOutput(name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    model.select_output_outlets(&outlets).map_err(invalid)?;

    let (stage_channels, stage_strides) = probe_stages(&model)?;
    let engine = OnnxEngine {
        model,
        plans: Mutex::new(HashMap::new()),
    };
    BackboneHandle::build(
        model_sha256,
        stage_channels,
        stage_strides,
        preprocess,
        Engine::Onnx(engine),
    )
}

fn input_fact(h: usize, w: usize) -> InferenceFact {
    InferenceFact::dt_shape(f32::datum_type(), tvec!(1, 3, h, w))
}

fn probe_stages(model: &InferenceModel) -> Result<([usize; STAGE_COUNT], [usize; STAGE_COUNT])> {
    let typed = model
        .clone()
        .with_input_fact(0, input_fact(PROBE_SIDE, PROBE_SIDE))
        .and_then(|m| m.into_typed())
        .map_err(invalid)?;
    let mut channels = [0; STAGE_COUNT];
    let mut strides = [0; STAGE_COUNT];
    for i in 0..STAGE_COUNT {
        let fact = typed.output_fact(i).map_err(invalid)?;
        let shape = fact
            .shape
            .as_concrete()
            .ok_or_else(|| invalid(format!("stage {} has a symbolic shape", i + 1)))?;
        if shape.len() != 4 || shape[0] != 1 || shape[2] == 0 {
            return Err(invalid(format!(
                "stage {} has shape {shape:?}, expected 1xCxHxW",
                i + 1
            )));
        }
        channels[i] = shape[1];
        strides[i] = (PROBE_SIDE as f64 / shape[2] as f64).round() as usize;
    }
    Ok((channels, strides))
}

impl OnnxEngine {
    fn plan(&self, h: usize, w: usize) -> Result<Plan> {
        let mut plans = self.plans.lock().expect("plan cache poisoned");
        if let Some(plan) = plans.get(&(h, w)) {
            return Ok(plan.clone());
        }
        let plan = self
            .model
            .clone()
            .with_input_fact(0, input_fact(h, w))
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(|e| Error::Inference(e.to_string()))?;
        plans.insert((h, w), plan.clone());
        Ok(plan)
    }

    pub(crate) fn forward<T: Real>(&self, input: ArrayView3<'_, T>) -> Result<Vec<Array3<T>>> {
        let (c, h, w) = input.dim();
        let data: Vec<f32> = input.iter().map(|v| v.as_f64() as f32).collect();
        let tensor = Tensor::from_shape(&[1, c, h, w], &data)
            .map_err(|e| Error::Inference(e.to_string()))?;
        let outputs = self
            .plan(h, w)?
            .run(tvec!(tensor.into()))
            .map_err(|e| Error::Inference(e.to_string()))?;
        outputs
            .iter()
            .enumerate()
            .map(|(i, value)| {
                let view = value
                    .to_plain_array_view::<f32>()
                    .map_err(|e| Error::Inference(e.to_string()))?;
                let shape = view.shape();
                if shape.len() != 4 || shape[0] != 1 {
                    return Err(Error::Inference(format!(
                        "stage {} has shape {shape:?}",
                        i + 1
                    )));
                }
                let values: Vec<T> = view.iter().map(|v| T::lit(*v as f64)).collect();
                Array3::from_shape_vec((shape[1], shape[2], shape[3]), values)
                    .map_err(|e| Error::Inference(e.to_string()))
            })
            .collect()
    }
}

fn value_info(name: &str, dims: &[pb::tensor_shape_proto::dimension::Value]) -> pb::ValueInfoProto {
    use pb::tensor_shape_proto::Dimension;
    pb::ValueInfoProto {
        name: name.to_string(),
        r#type: Some(pb::TypeProto {
            value: Some(pb::type_proto::Value::TensorType(pb::type_proto::Tensor {
                elem_type: pb::tensor_proto::DataType::Float as i32,
                shape: Some(pb::TensorShapeProto {
                    dim: dims
                        .iter()
                        .map(|d| Dimension {
                            value: Some(d.clone()),
                            ..Default::default()
                        })
                        .collect(),
                }),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn ints_attr(name: &str, ints: Vec<i64>) -> pb::AttributeProto {
    pb::AttributeProto {
        name: name.into(),
        r#type: pb::attribute_proto::AttributeType::Ints as i32,
        ints,
        ..Default::default()
    }
}

pub(crate) fn export_synthetic(net: &SyntheticNet) -> Vec<u8> {
    use pb::tensor_shape_proto::dimension::Value as Dim;

    let mut nodes = Vec::new();
    let mut initializers = vec![pb::TensorProto {
        name: "reflect_pads".into(),
        dims: vec![8],
        data_type: pb::tensor_proto::DataType::Int64 as i32,
        int64_data: vec![0, 0, 1, 1, 0, 0, 1, 1],
        ..Default::default()
    }];
    let mut outputs = Vec::new();
    let mut prev = "image".to_string();
    for (i, layer) in net.layers.iter().enumerate() {
        let n = i + 1;
        let weight_name = format!("conv{n}.weight");
        initializers.push(pb::TensorProto {
            name: weight_name.clone(),
            dims: vec![layer.out_channels as i64, layer.in_channels as i64, 3, 3],
            data_type: pb::tensor_proto::DataType::Float as i32,
            float_data: layer.weight.iter().map(|v| *v as f32).collect(),
            ..Default::default()
        });
        let padded = format!("pad{n}");
        let conv = format!("conv{n}");
        let stage = format!("stage{n}");
        nodes.push(pb::NodeProto {
            input: vec![prev.clone(), "reflect_pads".into()],
            output: vec![padded.clone()],
            name: format!("Pad_{n}"),
            op_type: "Pad".into(),
            attribute: vec![pb::AttributeProto {
                name: "mode".into(),
                r#type: pb::attribute_proto::AttributeType::String as i32,
                s: b"reflect".to_vec(),
                ..Default::default()
            }],
            ..Default::default()
        });
        nodes.push(pb::NodeProto {
            input: vec![padded, weight_name],
            output: vec![conv.clone()],
            name: format!("Conv_{n}"),
            op_type: "Conv".into(),
            attribute: vec![
                ints_attr("kernel_shape", vec![3, 3]),
                ints_attr("strides", vec![2, 2]),
            ],
            ..Default::default()
        });
        nodes.push(pb::NodeProto {
            input: vec![conv],
            output: vec![stage.clone()],
            name: format!("Abs_{n}"),
            op_type: "Abs".into(),
            ..Default::default()
        });
        outputs.push(value_info(
            &stage,
            &[
                Dim::DimValue(1),
                Dim::DimValue(layer.out_channels as i64),
                Dim::DimParam(format!("h{n}")),
                Dim::DimParam(format!("w{n}")),
            ],
        ));
        prev = stage;
    }

    let model = pb::ModelProto {
        ir_version: 7,
        opset_import: vec![pb::OperatorSetIdProto {
            domain: String::new(),
            version: 13,
        }],
        producer_name: "mdfs-synthetic".into(),
        graph: Some(pb::GraphProto {
            node: nodes,
            name: format!("synthetic_seed_{}", net.seed),
            initializer: initializers,
            input: vec![value_info(
                "image",
                &[
                    Dim::DimValue(1),
                    Dim::DimValue(3),
                    Dim::DimParam("height".into()),
                    Dim::DimParam("width".into()),
                ],
            )],
            output: outputs,
            ..Default::default()
        }),
        ..Default::default()
    };
    model.encode_to_vec()
}
