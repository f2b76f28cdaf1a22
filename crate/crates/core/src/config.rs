//! Fixed dimensions, seeds and defaults shared across the pipeline.

/// Number of Fourier octaves per box component.
pub const K_FREQ: usize = 4;
/// Box parameters encoded per octave: x, y, z, length, width, height, yaw.
pub const BOX_PARAMS: usize = 7;
pub const D_GEO: usize = 2 * K_FREQ * BOX_PARAMS;
pub const D_TOK: usize = 32;
pub const D_VIS: usize = 27;
pub const D_E: usize = 64;
pub const D_FUSED_IN: usize = D_GEO + D_TOK + D_VIS;
/// Shared space of the evaluator's projection heads.
pub const D_SHARED: usize = 32;

pub const FUSION_SEED: u64 = 0xC0FFEE;
pub const VISUAL_HEAD_SEED: u64 = 0xFACE;
pub const EMBEDDING_HEAD_SEED: u64 = 0xBEEF;

/// Upper bound of any emphasis weight.
pub const W_MAX: f64 = 8.0;

pub const DEFAULT_IMAGE_SIZE: u32 = 128;
pub const MIN_CROP_AREA: u64 = 16;
pub const DEFAULT_FEATHER_PX: u32 = 2;
pub const MAX_ITERATIONS_CAP: u32 = 32;

/// The configuration record exposed to callers that want every constant at once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub k_freq: usize,
    pub d_geo: usize,
    pub d_tok: usize,
    pub d_vis: usize,
    pub d_e: usize,
    pub d_shared: usize,
    pub fusion_seed: u64,
    pub visual_head_seed: u64,
    pub embedding_head_seed: u64,
    pub w_max: f64,
}

pub const ENCODER_CONFIG: EncoderConfig = EncoderConfig {
    k_freq: K_FREQ,
    d_geo: D_GEO,
    d_tok: D_TOK,
    d_vis: D_VIS,
    d_e: D_E,
    d_shared: D_SHARED,
    fusion_seed: FUSION_SEED,
    visual_head_seed: VISUAL_HEAD_SEED,
    embedding_head_seed: EMBEDDING_HEAD_SEED,
    w_max: W_MAX,
};
