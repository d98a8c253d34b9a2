//! Grad-CAM layer maps, inference timing, ablation sweeps and noise
//! robustness reports.

mod ablation;
mod bench;
mod gradcam;
mod robustness;

pub use ablation::{ablation_sweep, axis_rows, run_variant, AblationAxis, AblationRow, AblationTable};
pub use bench::{fps_benchmark, FpsReport};
pub use gradcam::{cam_from_tape, grad_cam, resolve_layer, HeatMap, LAYER_IDS};
pub use robustness::{default_noise_specs, noise_robustness, NoiseKind, NoiseSpec, RobustnessReport, RobustnessRow};
