// SPDX-License-Identifier: Apache-2.0

// One observation window: a synthetic digit through the spike generator,
// the reservoir and the time tagger, saved as an SVG raster.

use std::sync::Arc;

use bsnn::desim::CLOCK_STEP;
use bsnn::elaborator::elaborate;
use bsnn::netgen::{generate, ConnectivityParams, GridDims};
use bsnn::neuroblocks::BlockConfig;
use bsnn::shd::{preprocess, synthetic_samples};
use bsnn::spikeio::{observe, probe_labels, RasterWindow, WINDOW_BINS};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let spec = generate(GridDims::default(), &ConnectivityParams::default(), Some(1), 49)?;
    let net = elaborate(&spec, &BlockConfig::lumped())?;
    let nl = Arc::new(net.netlist.clone());
    let sample = &synthetic_samples(4, 1, 3)[2];
    let input = preprocess(sample).to_input();
    let (obs, _) = observe(&nl, &net, &input)?;
    let active = (0..obs.channels).filter(|&c| obs.count(c) > 0).count();
    println!("{} input spikes -> {} output spikes on {active} neurons", input.events.len(), obs.total());

    let raster = RasterWindow::from_matrix(&obs, probe_labels(&nl), CLOCK_STEP * WINDOW_BINS as u64);
    let path = std::env::temp_dir().join("bsnn_raster.svg");
    std::fs::write(&path, raster.to_svg())?;
    println!("raster: {}", path.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
