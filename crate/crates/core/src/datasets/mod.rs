//! Image corpora, subjective-score tables and synthetic degradations.

mod corpus;
mod degrade;
mod mos;
mod scenes;

pub use corpus::{
    image_from_dynamic, load_corpus, load_image, scan_corpus, sha256_file, CorpusEntry,
    CorpusManifest, CorpusScan, IMAGE_EXTENSIONS,
};
pub use degrade::{
    degrade, gaussian_blur, jpeg_like_block_avg, white_noise, DegradationKind, DEFAULT_NOISE_SEED,
};
pub use mos::{load_mos, JoinedScores, MosRow, MosTable};
pub use scenes::{save_png, synthetic_scene};
