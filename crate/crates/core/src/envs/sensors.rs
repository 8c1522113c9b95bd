//! Perfect and noisy hazard sensors.

use super::grid::GridState;
use rand::Rng;
use rand_distr::{Beta, Distribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorMode {
    Perfect,
    Noisy,
}

/// Noisy sensors report a confidence drawn from `Beta(k * tp, k * (1 - tp))`
/// on hazard cells and from `Beta(k * (1 - tn), k * tn)` elsewhere, so the
/// mean confidence is `tp` resp. `1 - tn`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub mode: SensorMode,
    pub true_positive: f64,
    pub true_negative: f64,
    /// Beta concentration `k`.
    pub concentration: f64,
}

impl SensorModel {
    pub fn perfect() -> Self {
        SensorModel {
            mode: SensorMode::Perfect,
            true_positive: 1.0,
            true_negative: 1.0,
            concentration: 51.0,
        }
    }

    pub fn noisy(true_positive: f64, true_negative: f64) -> Self {
        SensorModel {
            mode: SensorMode::Noisy,
            true_positive,
            true_negative,
            concentration: 51.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, r) in [("true_positive", self.true_positive), ("true_negative", self.true_negative)] {
            if !(0.5..=1.0).contains(&r) {
                return Err(format!("{name} rate {r} outside [0.5, 1]"));
            }
        }
        if self.mode == SensorMode::Perfect && (self.true_positive != 1.0 || self.true_negative != 1.0) {
            return Err("perfect sensors need rates of 1".into());
        }
        if !(self.concentration > 0.0) {
            return Err(format!("concentration {} must be positive", self.concentration));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64 {
        if mean <= 0.0 || mean >= 1.0 {
            return mean.clamp(0.0, 1.0);
        }
        let k = self.concentration;
        Beta::new(k * mean, k * (1.0 - mean)).unwrap().sample(rng)
    }

    /// Reading for one cell given whether it holds a hazard.
    pub fn read<R: Rng + ?Sized>(&self, hazard: bool, rng: &mut R) -> f64 {
        match self.mode {
            SensorMode::Perfect => hazard as u8 as f64,
            SensorMode::Noisy => {
                let mean = if hazard {
                    self.true_positive
                } else {
                    1.0 - self.true_negative
                };
                self.draw(mean, rng)
            }
        }
    }
}

/// One reading per offset (relative to the agent); cells outside the grid read as hazard-free.
pub fn sense<R: Rng + ?Sized>(state: &GridState, model: &SensorModel, offsets: &[(i64, i64)], rng: &mut R) -> Vec<f64> {
    let (ax, ay) = state.agent;
    offsets
        .iter()
        .map(|&(dx, dy)| model.read(state.hazard_at((ax + dx, ay + dy)), rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noisy_calibration() {
        let m = SensorModel::noisy(0.99, 0.99);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let pos: f64 = (0..n).map(|_| m.read(true, &mut rng)).sum::<f64>() / n as f64;
        let neg: f64 = (0..n).map(|_| m.read(false, &mut rng)).sum::<f64>() / n as f64;
        assert!((pos - 0.99).abs() < 0.02, "{pos}");
        assert!((neg - 0.01).abs() < 0.02, "{neg}");
    }

    #[test]
    fn validation() {
        assert!(SensorModel::noisy(0.4, 0.9).validate().is_err());
        assert!(SensorModel::perfect().validate().is_ok());
    }
}
