//! Random phantoms with planted lesions and their simulated acquisitions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::detect::DetectorTemplate;
use crate::error::Result;
use crate::mri::{
    make_phantom, make_sampling_mask, simulate_acquisition, AcquisitionData, CoilSensitivities, Ellipse, Lesion,
    LesionShape, MaskKind, Phantom, PhantomSpec,
};

/// The two synthetic lesion classes: `(shape, radius)` indexed by class id.
pub const LESION_CLASSES: [(LesionShape, f64); 2] = [(LesionShape::Disc, 3.0), (LesionShape::Ring, 4.0)];

/// One matched-filter template per lesion class.
pub fn lesion_templates() -> Vec<DetectorTemplate> {
    LESION_CLASSES
        .iter()
        .enumerate()
        .map(|(c, &(shape, r))| DetectorTemplate::from_lesion(shape, r, c as u32))
        .collect()
}

/// SplitMix64 mixing of a seed with a list of tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut z = seed;
    for &t in tags {
        z = z.wrapping_add(t.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub size: usize,
    pub n_coils: usize,
    /// Mean of the Poisson lesion count per phantom.
    pub mean_lesions: f64,
    pub max_lesions: usize,
    /// Additive lesion intensity before normalization (body intensity 0.6).
    pub lesion_contrast: f64,
    /// Multiplies the normalized phantom (99th percentile 1) before
    /// acquisition; sets the image scale against which the ball radius acts.
    pub intensity_scale: f64,
    /// Absolute k-space noise standard deviation per component.
    pub noise_sigma: f64,
    pub acs_fraction: f64,
}

const SCALE: f64 = 50.0;

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            size: 128,
            n_coils: 4,
            mean_lesions: 2.0,
            max_lesions: 4,
            lesion_contrast: 0.3,
            intensity_scale: SCALE,
            noise_sigma: 2e-4 * SCALE,
            acs_fraction: 0.08,
        }
    }
}

/// Random body with internal structures and Poisson-many lesions placed on
/// pixel centers, well inside the body and apart from each other.
pub fn random_phantom_spec(cfg: &DatasetConfig, seed: u64) -> PhantomSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let body = Ellipse {
        center: [rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03)],
        axes: [rng.random_range(0.72..0.85), rng.random_range(0.8..0.92)],
        angle_deg: rng.random_range(-10.0..10.0),
        intensity: 0.6,
    };
    let mut ellipses = vec![body.clone()];
    for _ in 0..rng.random_range(3..=5) {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        ellipses.push(Ellipse {
            center: [rng.random_range(-0.45..0.45), rng.random_range(-0.5..0.5)],
            axes: [rng.random_range(0.08..0.28), rng.random_range(0.08..0.28)],
            angle_deg: rng.random_range(0.0..180.0),
            intensity: sign * rng.random_range(0.05..0.2),
        });
    }

    let n = cfg.size as f64;
    let count = (Poisson::new(cfg.mean_lesions.max(1e-9)).expect("positive mean").sample(&mut rng) as usize)
        .min(cfg.max_lesions);
    let mut lesions: Vec<Lesion> = Vec::with_capacity(count);
    let mut attempts = 0;
    while lesions.len() < count && attempts < 1000 {
        attempts += 1;
        let class_id = rng.random_range(0..LESION_CLASSES.len());
        let (shape, radius) = LESION_CLASSES[class_id];
        // Normalized offset inside 60% of the body ellipse.
        let t = rng.random_range(0.0..std::f64::consts::TAU);
        let s = 0.6 * rng.random::<f64>().sqrt();
        let (sn, cs) = (body.angle_deg.to_radians().sin(), body.angle_deg.to_radians().cos());
        let (a, b) = (s * body.axes[0] * t.cos(), s * body.axes[1] * t.sin());
        let u = body.center[0] + cs * a - sn * b;
        let v = body.center[1] + sn * a + cs * b;
        let cx = (((u + 1.0) / 2.0 * n).floor() + 0.5).clamp(0.5, n - 0.5);
        let cy = (((v + 1.0) / 2.0 * n).floor() + 0.5).clamp(0.5, n - 0.5);
        let far = lesions
            .iter()
            .all(|l| ((l.center[0] - cx).powi(2) + (l.center[1] - cy).powi(2)).sqrt() >= 18.0);
        if far {
            lesions.push(Lesion {
                shape,
                center: [cx, cy],
                radius,
                contrast: cfg.lesion_contrast,
                class_id: class_id as u32,
            });
        }
    }
    PhantomSpec {
        width: cfg.size,
        height: cfg.size,
        ellipses,
        lesions,
        bias_amplitude: 0.1,
        seed,
    }
}

/// A phantom with its acquisition at one acceleration.
#[derive(Clone, Debug)]
pub struct Instance {
    pub phantom: Phantom,
    pub acq: AcquisitionData,
}

/// Simulates one instance. Coil maps are shared by all instances of a size;
/// mask and noise seeds derive from `seed`.
pub fn make_instance(spec: &PhantomSpec, cfg: &DatasetConfig, acceleration: f64, sens: &CoilSensitivities, seed: u64) -> Result<Instance> {
    let mut phantom = make_phantom(spec)?;
    phantom.image.scale(cfg.intensity_scale);
    let mask = make_sampling_mask(cfg.size, acceleration, cfg.acs_fraction, MaskKind::Equispaced, derive_seed(seed, &[1]))?;
    let acq = simulate_acquisition(&phantom.image, sens, &mask, cfg.noise_sigma, derive_seed(seed, &[2]))?;
    Ok(Instance { phantom, acq })
}

pub fn coil_maps(cfg: &DatasetConfig) -> Result<CoilSensitivities> {
    if cfg.n_coils == 1 {
        Ok(CoilSensitivities::single(cfg.size, cfg.size))
    } else {
        CoilSensitivities::synthetic(cfg.size, cfg.size, cfg.n_coils)
    }
}
