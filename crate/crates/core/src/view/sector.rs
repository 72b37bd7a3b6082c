use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LabelImage;
use crate::{Error, Result};

/// Wedge-annulus field of view opening downwards (+y) from `apex`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorCone {
    pub apex: [f64; 2],
    pub half_angle_deg: f64,
    pub min_depth: f64,
    pub max_depth: f64,
}

impl SectorCone {
    pub fn new(apex: [f64; 2], half_angle_deg: f64, min_depth: f64, max_depth: f64) -> Result<Self> {
        let cone = SectorCone {
            apex,
            half_angle_deg,
            min_depth,
            max_depth,
        };
        cone.validate()?;
        Ok(cone)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_angle_deg > 0.0 && self.half_angle_deg < 90.0) {
            return Err(Error::Geometry(format!(
                "sector half-angle {} must lie in (0, 90)",
                self.half_angle_deg
            )));
        }
        if !(self.min_depth >= 0.0 && self.min_depth < self.max_depth) {
            return Err(Error::Geometry(format!(
                "sector depths need 0 <= min < max, got [{}, {}]",
                self.min_depth, self.max_depth
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.apex[0], y - self.apex[1]);
        let r = dx.hypot(dy);
        if r < self.min_depth || r > self.max_depth {
            return false;
        }
        r == 0.0 || dx.atan2(dy).abs().to_degrees() <= self.half_angle_deg
    }
}

/// Random transducer sector: apex centred horizontally in the top 10% band,
/// half-angle U(30, 45) degrees, depth range U(0, 0.05)..U(0.85, 1.0) of the image.
pub fn make_sector(rng: &mut impl Rng, image_size: usize) -> SectorCone {
    let n = image_size as f64;
    let apex = [0.5 * n, 0.1 * n * rng.random::<f64>()];
    let half = 30.0 + 15.0 * rng.random::<f64>();
    let min_depth = 0.05 * n * rng.random::<f64>();
    let max_depth = (0.85 + 0.15 * rng.random::<f64>()) * n;
    SectorCone::new(apex, half, min_depth, max_depth).expect("default sector ranges are valid")
}

/// Clears every pixel whose centre lies outside the cone.
pub fn apply_sector(image: &LabelImage, cone: &SectorCone) -> LabelImage {
    let mut out = image.clone();
    for y in 0..image.size {
        for x in 0..image.size {
            if !cone.contains(x as f64 + 0.5, y as f64 + 0.5) {
                out.set(x, y, 0);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn ones(n: usize) -> LabelImage {
        LabelImage {
            size: n,
            pixels: vec![1; n * n],
        }
    }

    #[test]
    fn covering_cone_is_identity() {
        let img = ones(32);
        let cone = SectorCone::new([16.0, -1e4], 89.0, 0.0, 1e5).unwrap();
        assert_eq!(apply_sector(&img, &cone), img);
    }

    #[test]
    fn degenerate_annulus_is_rejected() {
        assert!(SectorCone::new([0.0, 0.0], 40.0, 5.0, 5.0).is_err());
        assert!(SectorCone::new([0.0, 0.0], 90.0, 0.0, 5.0).is_err());
        assert!(SectorCone::new([0.0, 0.0], 0.0, 0.0, 5.0).is_err());
    }

    #[test]
    fn masked_fraction_matches_wedge_area() {
        let n = 512;
        let cone = SectorCone::new([n as f64 / 2.0, 0.0], 45.0, 0.0, n as f64 / 2.0).unwrap();
        let out = apply_sector(&ones(n), &cone);
        let masked = out.count(0) as f64 / (n * n) as f64;
        // wedge of total angle pi/2 and radius n/2, entirely inside the image
        let wedge = std::f64::consts::FRAC_PI_4 * (n as f64 / 2.0).powi(2);
        let expected = 1.0 - wedge / (n * n) as f64;
        assert!((masked - expected).abs() < 0.02, "{masked} vs {expected}");
    }

    #[test]
    fn sampled_sectors_are_valid() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let c = make_sector(&mut rng, 64);
            c.validate().unwrap();
            assert!(c.apex[1] <= 6.4);
            assert!((30.0..=45.0).contains(&c.half_angle_deg));
        }
    }
}
