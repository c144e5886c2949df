// SPDX-License-Identifier: Apache-2.0

//! Spiking Heidelberg Digits: loading, 2 ms binning into 49 channels and
//! channel-jitter augmentation.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spikeio::{SpikeEvent, SpikeTrainInput};

pub const UNITS: u16 = 700;
pub const CHANNELS: usize = 49;
pub const CLASSES: usize = 20;
pub const BIN_SECONDS: f64 = 0.002;
pub const TRAIN_FILE: &str = "shd_train.h5";
pub const TEST_FILE: &str = "shd_test.h5";
pub const TRAIN_SIZE: usize = 8_156;
pub const TEST_SIZE: usize = 2_264;
pub const JITTER_SIGMA: f64 = 20.0;

#[derive(Debug, Error)]
pub enum ShdError {
    #[error("{file}: {msg}")]
    File { file: PathBuf, msg: String },
    #[error("sample {index}: {msg}")]
    Sample { index: usize, msg: String },
    #[error("cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    /// Seconds from sample onset.
    pub times: Vec<f32>,
    pub units: Vec<u16>,
    /// 0..9 English digits, 10..19 German.
    pub label: u16,
}

impl RawSample {
    pub fn validate(&self) -> Result<(), String> {
        if self.times.len() != self.units.len() {
            return Err(format!("{} times but {} units", self.times.len(), self.units.len()));
        }
        if let Some(u) = self.units.iter().find(|u| **u >= UNITS) {
            return Err(format!("unit {u} out of range"));
        }
        if self.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err("negative or non-finite spike time".into());
        }
        if usize::from(self.label) >= CLASSES {
            return Err(format!("label {} out of range", self.label));
        }
        Ok(())
    }

    pub fn duration(&self) -> f32 {
        self.times.iter().copied().fold(0.0, f32::max)
    }
}

/// Boolean `bins x 49` array in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinnedSample {
    pub bins: usize,
    pub cells: Vec<bool>,
    pub label: u16,
}

impl BinnedSample {
    pub fn get(&self, bin: usize, channel: usize) -> bool {
        self.cells[bin * CHANNELS + channel]
    }

    /// Each set cell becomes one input spike; bin `b` maps to step `b`.
    pub fn to_input(&self) -> SpikeTrainInput {
        let events = (0..self.bins)
            .flat_map(|b| {
                (0..CHANNELS)
                    .filter(move |&c| self.get(b, c))
                    .map(move |c| SpikeEvent {
                        time_step: b as u32,
                        channel: c as u16,
                    })
            })
            .collect();
        SpikeTrainInput::new(CHANNELS, events).expect("49 channels fit the generator")
    }

    pub fn spike_count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }
}

/// Proportional grouping of 700 units into 49 channels (14 or 15 each).
pub fn channel_of(unit: u16) -> usize {
    usize::from(unit) * CHANNELS / usize::from(UNITS)
}

pub fn bin_of(time: f32) -> usize {
    (f64::from(time) / BIN_SECONDS).floor() as usize
}

pub fn preprocess(sample: &RawSample) -> BinnedSample {
    let bins = if sample.times.is_empty() {
        0
    } else {
        bin_of(sample.duration()) + 1
    };
    let mut cells = vec![false; bins * CHANNELS];
    for (&t, &u) in sample.times.iter().zip(&sample.units) {
        cells[bin_of(t) * CHANNELS + channel_of(u)] = true;
    }
    BinnedSample {
        bins,
        cells,
        label: sample.label,
    }
}

/// Shifts each spike's unit by `round(N(0, sigma))`, clamped to the unit
/// range. Times are untouched.
pub fn augment(sample: &RawSample, sigma: f64, seed: u64) -> RawSample {
    if sigma <= 0.0 {
        return sample.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    let units = sample
        .units
        .iter()
        .map(|&u| {
            let shifted = f64::from(u) + noise.sample(&mut rng).round();
            shifted.clamp(0.0, f64::from(UNITS - 1)) as u16
        })
        .collect();
    RawSample {
        units,
        ..sample.clone()
    }
}

/// Appends one jittered copy of every sample; copy `i` is seeded from
/// `seed` and `i`.
pub fn augment_set(samples: &[RawSample], sigma: f64, seed: u64) -> Vec<RawSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = samples.to_vec();
    out.extend(samples.iter().map(|s| augment(s, sigma, rng.gen())));
    out
}

#[derive(Debug, Clone)]
pub struct ShdSplits {
    pub train: Vec<RawSample>,
    pub test: Vec<RawSample>,
}

/// Reads `shd_train.h5` and `shd_test.h5` from `dir`.
#[cfg(feature = "hdf5")]
pub fn load(dir: &Path) -> Result<ShdSplits, ShdError> {
    Ok(ShdSplits {
        train: load_file(&dir.join(TRAIN_FILE))?,
        test: load_file(&dir.join(TEST_FILE))?,
    })
}

#[cfg(feature = "hdf5")]
pub fn load_file(path: &Path) -> Result<Vec<RawSample>, ShdError> {
    use hdf5_metno::types::VarLenArray;

    let err = |msg: String| ShdError::File {
        file: path.to_path_buf(),
        msg,
    };
    if !path.exists() {
        return Err(err("file not found".into()));
    }
    let f = hdf5_metno::File::open(path).map_err(|e| err(e.to_string()))?;
    let read = || -> hdf5_metno::Result<_> {
        let times = f.dataset("spikes/times")?.read_raw::<VarLenArray<f32>>()?;
        let units = f.dataset("spikes/units")?.read_raw::<VarLenArray<u16>>()?;
        let labels = f.dataset("labels")?.read_raw::<u16>()?;
        Ok((times, units, labels))
    };
    let (times, units, labels) = read().map_err(|e| err(e.to_string()))?;
    if times.len() != labels.len() || units.len() != labels.len() {
        return Err(err(format!(
            "{} time arrays, {} unit arrays, {} labels",
            times.len(),
            units.len(),
            labels.len()
        )));
    }
    times
        .iter()
        .zip(&units)
        .zip(&labels)
        .enumerate()
        .map(|(index, ((t, u), &label))| {
            let s = RawSample {
                times: t.to_vec(),
                units: u.to_vec(),
                label,
            };
            s.validate()
                .map_err(|msg| err(format!("sample {index}: {msg}")))?;
            Ok(s)
        })
        .collect()
}

/// Writes samples in the SHD layout; used for fixtures and synthetic sets.
#[cfg(feature = "hdf5")]
pub fn write_file(path: &Path, samples: &[RawSample]) -> Result<(), ShdError> {
    use hdf5_metno::types::VarLenArray;

    let err = |e: hdf5_metno::Error| ShdError::File {
        file: path.to_path_buf(),
        msg: e.to_string(),
    };
    let f = hdf5_metno::File::create(path).map_err(err)?;
    let times: Vec<VarLenArray<f32>> = samples.iter().map(|s| VarLenArray::from_slice(&s.times)).collect();
    let units: Vec<VarLenArray<u16>> = samples.iter().map(|s| VarLenArray::from_slice(&s.units)).collect();
    let labels: Vec<u16> = samples.iter().map(|s| s.label).collect();
    let g = f.create_group("spikes").map_err(err)?;
    g.new_dataset_builder().with_data(&times).create("times").map_err(err)?;
    g.new_dataset_builder().with_data(&units).create("units").map_err(err)?;
    f.new_dataset_builder().with_data(&labels).create("labels").map_err(err)?;
    Ok(())
}

/// Directory holding the SHD files, from `BSNN_SHD_DIR` or `data/shd`.
pub fn default_dir() -> PathBuf {
    std::env::var_os("BSNN_SHD_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/shd"))
}

pub fn available(dir: &Path) -> bool {
    cfg!(feature = "hdf5") && dir.join(TRAIN_FILE).is_file() && dir.join(TEST_FILE).is_file()
}

/// Keeps samples whose label is in `classes`, at most `per_class` each in
/// file order, relabelled to the position of their label in `classes`.
pub fn select_subset(samples: &[RawSample], classes: &[u16], per_class: usize) -> Vec<RawSample> {
    let mut taken = vec![0usize; classes.len()];
    samples
        .iter()
        .filter_map(|s| {
            let k = classes.iter().position(|c| *c == s.label)?;
            if taken[k] >= per_class {
                return None;
            }
            taken[k] += 1;
            Some(RawSample {
                label: k as u16,
                ..s.clone()
            })
        })
        .collect()
}

/// SHD-shaped stand-in data: each class is a noisy frequency sweep with a
/// class-specific start unit, slope and duration. Not speech.
pub fn synthetic_samples(classes: usize, per_class: usize, seed: u64) -> Vec<RawSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for k in 0..classes {
            let start = 60.0 + 580.0 * (k as f64 + 0.5) / classes as f64;
            let slope = if k % 2 == 0 { -250.0 } else { 250.0 };
            let dur = 0.25 + 0.05 * (k % 4) as f64 + rng.gen_range(-0.02..0.02);
            let n = rng.gen_range(150..250);
            let mut spikes: Vec<(f32, u16)> = (0..n)
                .map(|_| {
                    let t = rng.gen_range(0.0..dur);
                    let u = start + slope * t + rng.gen_range(-25.0..25.0);
                    (t as f32, u.clamp(0.0, 699.0) as u16)
                })
                .collect();
            spikes.sort_by(|a, b| a.0.total_cmp(&b.0));
            out.push(RawSample {
                times: spikes.iter().map(|s| s.0).collect(),
                units: spikes.iter().map(|s| s.1).collect(),
                label: k as u16,
            });
        }
    }
    out
}

const CACHE_MAGIC: &[u8; 4] = b"BSHC";
const CACHE_VERSION: u32 = 1;

/// Compact cache: header, then per sample `label u16, bins u32, n u32`
/// and `n` set cells as `(bin u32, channel u8)`, little-endian.
pub fn write_cache(path: &Path, samples: &[BinnedSample]) -> Result<(), ShdError> {
    let mut b = Vec::new();
    b.extend_from_slice(CACHE_MAGIC);
    b.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    b.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    for s in samples {
        b.extend_from_slice(&s.label.to_le_bytes());
        b.extend_from_slice(&(s.bins as u32).to_le_bytes());
        let set: Vec<usize> = (0..s.cells.len()).filter(|&i| s.cells[i]).collect();
        b.extend_from_slice(&(set.len() as u32).to_le_bytes());
        for i in set {
            b.extend_from_slice(&((i / CHANNELS) as u32).to_le_bytes());
            b.push((i % CHANNELS) as u8);
        }
    }
    std::fs::File::create(path)?.write_all(&b)?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<Vec<BinnedSample>, ShdError> {
    let mut b = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut b)?;
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8], ShdError> {
        let s = b
            .get(at..at + n)
            .ok_or_else(|| ShdError::Cache("truncated".into()))?;
        at += n;
        Ok(s)
    };
    if take(4)? != CACHE_MAGIC {
        return Err(ShdError::Cache("bad magic".into()));
    }
    let u32_of = |s: &[u8]| u32::from_le_bytes([s[0], s[1], s[2], s[3]]);
    let version = u32_of(take(4)?);
    if version != CACHE_VERSION {
        return Err(ShdError::Cache(format!("unsupported version {version}")));
    }
    let n = u32_of(take(4)?) as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let l = take(2)?;
        let label = u16::from_le_bytes([l[0], l[1]]);
        let bins = u32_of(take(4)?) as usize;
        let set = u32_of(take(4)?) as usize;
        let mut cells = vec![false; bins * CHANNELS];
        for _ in 0..set {
            let bin = u32_of(take(4)?) as usize;
            let ch = usize::from(take(1)?[0]);
            let idx = bin * CHANNELS + ch;
            if ch >= CHANNELS || idx >= cells.len() {
                return Err(ShdError::Cache("cell out of range".into()));
            }
            cells[idx] = true;
        }
        out.push(BinnedSample { bins, cells, label });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn sample(spikes: &[(f32, u16)], label: u16) -> RawSample {
        RawSample {
            times: spikes.iter().map(|s| s.0).collect(),
            units: spikes.iter().map(|s| s.1).collect(),
            label,
        }
    }

    #[test]
    fn binning_examples() {
        let b = preprocess(&sample(&[(0.005, 0)], 3));
        assert_eq!(b.bins, 3);
        assert!(b.get(2, 0));
        assert_eq!(b.spike_count(), 1);
        assert_eq!(b.label, 3);
        assert_eq!(channel_of(699), 48);
        assert_eq!(channel_of(14), 0);
        assert_eq!(channel_of(15), 1);
        let e = preprocess(&sample(&[], 0));
        assert_eq!(e.spike_count(), 0);
    }

    #[test]
    fn channel_groups_are_14_or_15_wide() {
        let mut sizes = [0usize; CHANNELS];
        for u in 0..UNITS {
            sizes[channel_of(u)] += 1;
        }
        assert!(sizes.iter().all(|s| *s == 14 || *s == 15));
        assert_eq!(sizes.iter().sum::<usize>(), 700);
    }

    #[test]
    fn merged_spikes_or_together() {
        let b = preprocess(&sample(&[(0.0011, 0), (0.0012, 13), (0.0013, 700 - 1)], 0));
        assert_eq!(b.spike_count(), 2);
        let input = b.to_input();
        assert_eq!(input.events.len(), 2);
        assert_eq!((input.events[0].time_step, input.events[0].channel), (0, 0));
    }

    #[test]
    fn zero_sigma_is_identity_and_augment_doubles() {
        let s = synthetic_samples(4, 3, 1);
        assert_eq!(augment(&s[0], 0.0, 9), s[0]);
        let a = augment_set(&s, JITTER_SIGMA, 5);
        assert_eq!(a.len(), 2 * s.len());
        assert_eq!(a, augment_set(&s, JITTER_SIGMA, 5));
        assert_ne!(a, augment_set(&s, JITTER_SIGMA, 6));
        assert_eq!(2 * TRAIN_SIZE, 16_312);
    }

    #[test]
    fn subset_relabels_and_caps() {
        let s: Vec<RawSample> = (0..40).map(|i| sample(&[], (i % 20) as u16)).collect();
        let sub = select_subset(&s, &[0, 1, 2, 3, 10, 11, 12, 13], 1);
        assert_eq!(sub.len(), 8);
        assert_eq!(sub.iter().map(|s| s.label).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        let b: Vec<BinnedSample> = synthetic_samples(3, 2, 4).iter().map(preprocess).collect();
        write_cache(&p, &b).unwrap();
        assert_eq!(read_cache(&p).unwrap(), b);
        std::fs::write(&p, b"BSHC\x09\0\0\0").unwrap();
        assert!(matches!(read_cache(&p), Err(ShdError::Cache(_))));
    }

    #[cfg(feature = "hdf5")]
    #[test]
    fn hdf5_layout_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let train = synthetic_samples(2, 3, 7);
        let test = synthetic_samples(2, 1, 8);
        write_file(&dir.path().join(TRAIN_FILE), &train).unwrap();
        write_file(&dir.path().join(TEST_FILE), &test).unwrap();
        assert!(available(dir.path()));
        let s = load(dir.path()).unwrap();
        assert_eq!(s.train, train);
        assert_eq!(s.test, test);
    }

    #[cfg(feature = "hdf5")]
    #[test]
    fn missing_file_names_the_file() {
        let e = load_file(Path::new("/nonexistent/shd_train.h5")).unwrap_err();
        assert!(e.to_string().contains("shd_train.h5"));
    }

    #[test]
    fn official_split_sizes_when_present() {
        let dir = default_dir();
        if !available(&dir) {
            return;
        }
        #[cfg(feature = "hdf5")]
        {
            let s = load(&dir).unwrap();
            assert_eq!((s.train.len(), s.test.len()), (TRAIN_SIZE, TEST_SIZE));
        }
    }

    proptest! {
        #[test]
        fn channel_map_monotone(a in 0u16..700, b in 0u16..700) {
            if a <= b {
                prop_assert!(channel_of(a) <= channel_of(b));
            }
            prop_assert!(channel_of(a) < CHANNELS);
        }

        #[test]
        fn augment_preserves_counts_times_and_range(seed in any::<u64>(), sigma in 0.0f64..100.0) {
            let s = &synthetic_samples(2, 1, seed)[1];
            let a = augment(s, sigma, seed);
            prop_assert_eq!(&a.times, &s.times);
            prop_assert_eq!(a.units.len(), s.units.len());
            prop_assert!(a.units.iter().all(|u| *u < UNITS));
            prop_assert_eq!(preprocess(&a).label, s.label);
        }

        #[test]
        fn preprocess_deterministic(seed in any::<u64>()) {
            let s = &synthetic_samples(3, 1, seed)[2];
            prop_assert_eq!(preprocess(s), preprocess(s));
        }
    }
}
