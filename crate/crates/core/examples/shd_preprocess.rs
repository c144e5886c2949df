// SPDX-License-Identifier: Apache-2.0

// Loads SHD when present (BSNN_SHD_DIR), otherwise synthetic stand-ins;
// bins, augments and caches them.

use bsnn::shd;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let dir = shd::default_dir();
    let raw = if shd::available(&dir) {
        #[cfg(feature = "hdf5")]
        {
            shd::load_file(&dir.join(shd::TEST_FILE))?.into_iter().take(40).collect()
        }
        #[cfg(not(feature = "hdf5"))]
        unreachable!()
    } else {
        println!("no SHD in {}, using synthetic samples", dir.display());
        shd::synthetic_samples(20, 2, 1)
    };
    let augmented = shd::augment_set(&raw, shd::JITTER_SIGMA, 9);
    let binned: Vec<_> = augmented.iter().map(shd::preprocess).collect();
    let spikes: usize = binned.iter().map(|b| b.spike_count()).sum();
    println!("{} samples ({} augmented), {spikes} binned spikes", binned.len(), augmented.len() - raw.len());

    let path = std::env::temp_dir().join("bsnn_shd.cache");
    shd::write_cache(&path, &binned)?;
    assert_eq!(shd::read_cache(&path)?, binned);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
