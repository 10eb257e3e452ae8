use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Bounded scalar distribution used by device profiles.
///
/// In scenario files a distribution is written as one of
/// `{ fixed = 3.0 }`, `{ uniform = { min = 1.0, max = 2.0 } }` or
/// `{ normal = { mean = 5.0, sd = 1.0, min = 2.0, max = 8.0 } }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dist {
    Fixed(f64),
    Uniform { min: f64, max: f64 },
    /// Normal truncated to `[min, max]`.
    Normal { mean: f64, sd: f64, min: f64, max: f64 },
}

const TRUNCATION_TRIES: usize = 64;

impl Dist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Dist::Fixed(v) => v,
            Dist::Uniform { min, max } => {
                if max > min {
                    rng.random_range(min..=max)
                } else {
                    min
                }
            }
            Dist::Normal { mean, sd, min, max } => {
                if sd <= 0.0 {
                    return mean.clamp(min, max);
                }
                let normal = Normal::new(mean, sd).expect("sd checked positive");
                for _ in 0..TRUNCATION_TRIES {
                    let v = normal.sample(rng);
                    if (min..=max).contains(&v) {
                        return v;
                    }
                }
                mean.clamp(min, max)
            }
        }
    }

    pub fn min(&self) -> f64 {
        match *self {
            Dist::Fixed(v) => v,
            Dist::Uniform { min, .. } | Dist::Normal { min, .. } => min,
        }
    }

    pub fn max(&self) -> f64 {
        match *self {
            Dist::Fixed(v) => v,
            Dist::Uniform { max, .. } | Dist::Normal { max, .. } => max,
        }
    }

    /// Checks that the support is a finite, non-empty subset of `[0, ∞)`.
    pub fn validate(&self) -> Result<(), String> {
        let (lo, hi) = (self.min(), self.max());
        if !lo.is_finite() || !hi.is_finite() {
            return Err("distribution bounds must be finite".into());
        }
        if lo < 0.0 {
            return Err("distribution bounds must be non-negative".into());
        }
        if lo > hi {
            return Err("distribution min exceeds max".into());
        }
        if let Dist::Normal { sd, mean, .. } = *self {
            if sd < 0.0 || !sd.is_finite() || !mean.is_finite() {
                return Err("normal sd must be finite and non-negative".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_stay_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Dist::Normal {
            mean: 10.0,
            sd: 50.0,
            min: 5.0,
            max: 12.0,
        };
        for _ in 0..1000 {
            let v = d.sample(&mut rng);
            assert!((5.0..=12.0).contains(&v));
        }
        let u = Dist::Uniform { min: 2.0, max: 2.0 };
        assert_eq!(u.sample(&mut rng), 2.0);
    }

    #[test]
    fn rejects_negative_support() {
        assert!(Dist::Fixed(-1.0).validate().is_err());
        assert!(Dist::Uniform { min: 3.0, max: 1.0 }.validate().is_err());
        assert!(Dist::Fixed(0.0).validate().is_ok());
    }

    #[test]
    fn toml_forms_parse() {
        #[derive(Deserialize)]
        struct W {
            a: Dist,
            b: Dist,
        }
        let w: W = toml::from_str("a = { fixed = 3.0 }\nb = { uniform = { min = 1.0, max = 2.0 } }\n").unwrap();
        assert_eq!(w.a, Dist::Fixed(3.0));
        assert_eq!(w.b, Dist::Uniform { min: 1.0, max: 2.0 });
    }
}
