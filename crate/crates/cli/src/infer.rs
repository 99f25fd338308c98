//! `combnet infer`: one frame from sensor images to keypoint JSON.

use std::path::PathBuf;

use combnet_core::config::Config;
use combnet_core::graph::{load_weights, HeadSet, PreparedNet};
use combnet_core::postprocess::{
    amplitude_from_phases, finish_frame, normalize_input, pgm, FrameResult, Image, PhaseFrame,
};

use crate::{graph_for, CliError, CliResult};

/// Network input: an amplitude image, or four phase images to combine.
#[derive(Debug, Clone)]
pub enum FrameSource {
    Amplitude(PathBuf),
    Phases([PathBuf; 4]),
}

#[derive(Debug, Clone)]
pub struct InferArgs {
    pub weights: PathBuf,
    pub source: FrameSource,
    pub depth: PathBuf,
}

/// Reads every input, then runs the pipeline. Nothing is written here, so
/// a failure leaves no partial output behind.
pub fn run(cfg: &Config, args: &InferArgs) -> CliResult<FrameResult> {
    let g = graph_for(cfg)?;
    let ws = load_weights(&args.weights)?;
    ws.check_entries(&g.inference_entries())?;
    let image = match &args.source {
        FrameSource::Amplitude(p) => Image::from(&pgm::read_pgm(p)?),
        FrameSource::Phases(ps) => {
            let [a, b, c, d] = ps;
            let phases = [pgm::read_pgm(a)?, pgm::read_pgm(b)?, pgm::read_pgm(c)?, pgm::read_pgm(d)?];
            let frame = PhaseFrame::new(phases, cfg.postprocess.z_range)?;
            amplitude_from_phases(&frame, cfg.postprocess.amplitude_coeffs)?
        }
    };
    let depth = pgm::read_pgm(&args.depth)?;
    if (depth.width, depth.height) != (image.width, image.height) {
        return Err(CliError::Input(format!(
            "depth image is {}x{} but the input frame is {}x{}",
            depth.width, depth.height, image.width, image.height
        )));
    }
    let (x, transform) = normalize_input(&image, g.input_hw)?;
    let net = PreparedNet::new(&g, &ws, cfg.network.lane_width)?;
    let out = net.forward(&x, HeadSet::InferenceHeads)?;
    Ok(finish_frame(&out, &transform, &depth, &cfg.postprocess)?)
}
