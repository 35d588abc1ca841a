//! Immutable slice store loaded at startup.

use std::path::Path;

use sdr_core::harness::{accel_dir_name, phantom_seed, random_phantom_spec, Context, ExperimentConfig};
use sdr_core::io::read_json;
use sdr_core::mri::{AcquisitionData, ComplexImage, GroundTruth};
use sdr_core::{Result, SdrError};

/// One phantom at one acceleration with its baseline reconstruction.
#[derive(Clone, Debug)]
pub struct Slice {
    pub id: String,
    pub phantom: usize,
    pub acceleration: f64,
    pub acq: AcquisitionData,
    pub initial: ComplexImage,
    pub ground_truth: Vec<GroundTruth>,
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    slices: Vec<Slice>,
}

pub fn slice_id(phantom: usize, acceleration: f64) -> String {
    format!("p{phantom:03}-x{acceleration}")
}

impl Dataset {
    /// Sorts by phantom, then acceleration.
    pub fn new(mut slices: Vec<Slice>) -> Self {
        slices.sort_by(|a, b| a.phantom.cmp(&b.phantom).then(a.acceleration.total_cmp(&b.acceleration)));
        Self { slices }
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn get(&self, id: &str) -> Option<&Slice> {
        self.slices.iter().find(|s| s.id == id)
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Simulates the test phantoms of `cfg` in memory.
    pub fn synthetic(cfg: &ExperimentConfig) -> Result<Self> {
        let ctx = Context::new(cfg.clone())?;
        let mut slices = Vec::new();
        for p in 0..cfg.n_phantoms {
            let seed = phantom_seed(cfg.master_seed, p);
            let spec = random_phantom_spec(&cfg.dataset, seed);
            for &a in &cfg.accelerations {
                let inst = ctx.instance(&spec, a, seed)?;
                slices.push(Slice {
                    id: slice_id(p, a),
                    phantom: p,
                    acceleration: a,
                    initial: ctx.baseline(&inst)?,
                    ground_truth: inst.phantom.ground_truth,
                    acq: inst.acq,
                });
            }
        }
        Ok(Self::new(slices))
    }

    /// Reads the layout written by `sdr gen-data`. Directories that do not
    /// follow it are skipped.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut slices = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let pdir = entry?.path();
            let Some(p) = index_suffix(&pdir, "phantom_") else {
                continue;
            };
            let ground_truth: Vec<GroundTruth> = read_json(pdir.join("ground_truth.json"))?;
            for sub in std::fs::read_dir(&pdir)? {
                let adir = sub?.path();
                let Some(a) = accel_suffix(&adir) else {
                    continue;
                };
                let acq: AcquisitionData = read_json(adir.join("acq.json"))?;
                acq.validate()?;
                let initial: ComplexImage = read_json(adir.join("init.json"))?;
                if initial.width() != acq.width() || initial.height() != acq.height() || !initial.is_finite() {
                    return Err(SdrError::Format(format!("{}: initial image does not match acquisition", adir.display())));
                }
                slices.push(Slice {
                    id: slice_id(p, a),
                    phantom: p,
                    acceleration: a,
                    acq,
                    initial,
                    ground_truth: ground_truth.clone(),
                });
            }
        }
        Ok(Self::new(slices))
    }
}

fn index_suffix(path: &Path, prefix: &str) -> Option<usize> {
    path.is_dir().then_some(())?;
    path.file_name()?.to_str()?.strip_prefix(prefix)?.parse().ok()
}

fn accel_suffix(path: &Path) -> Option<f64> {
    path.is_dir().then_some(())?;
    let a: f64 = path.file_name()?.to_str()?.strip_prefix("accel_")?.parse().ok()?;
    (accel_dir_name(a) == path.file_name()?.to_str()?).then_some(a)
}
