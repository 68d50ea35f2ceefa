use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::InjectionVector;
use crate::error::{Error, Result};
use crate::netcase::GridCase;
use crate::seeds;

/// The load-uncertainty set: base demand at every bus, scaled coordinate-wise
/// by independent factors in `[1 - f, 1 + f]`, with scheduled generation held
/// fixed. Stored in per-unit so trained models can redraw evaluation points
/// without the case file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadHypercube {
    pub gen_p: Vec<f64>,
    pub load_p: Vec<f64>,
    pub load_q: Vec<f64>,
}

impl LoadHypercube {
    pub fn from_case(case: &GridCase) -> Self {
        let base = case.base_mva;
        LoadHypercube {
            gen_p: case.gen_p().iter().map(|g| g / base).collect(),
            load_p: case.buses.iter().map(|b| b.p_load / base).collect(),
            load_q: case.buses.iter().map(|b| b.q_load / base).collect(),
        }
    }

    pub fn nodes(&self) -> usize {
        self.load_p.len()
    }

    pub fn center(&self) -> InjectionVector {
        self.injection(&self.load_p, &self.load_q)
    }

    fn injection(&self, load_p: &[f64], load_q: &[f64]) -> InjectionVector {
        InjectionVector {
            p: self.gen_p.iter().zip(load_p).map(|(g, l)| g - l).collect(),
            q: load_q.iter().map(|l| -l).collect(),
        }
    }

    /// Recovers the demand behind an injection drawn from this set.
    pub fn loads_of(&self, s: &InjectionVector) -> (Vec<f64>, Vec<f64>) {
        (
            self.gen_p.iter().zip(&s.p).map(|(g, p)| g - p).collect(),
            s.q.iter().map(|q| -q).collect(),
        )
    }

    /// `count` i.i.d. draws; nonzero load coordinates only, in bus order,
    /// real before reactive.
    pub fn sample(&self, fraction: f64, count: usize, seed: u64) -> Result<Vec<InjectionVector>> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::Argument(format!(
                "hypercube fraction {fraction} outside [0, 1)"
            )));
        }
        let factor = Uniform::new_inclusive(1.0 - fraction, 1.0 + fraction)
            .map_err(|e| Error::Argument(e.to_string()))?;
        let mut rng = seeds::rng(seed);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut lp = self.load_p.clone();
            let mut lq = self.load_q.clone();
            for i in 0..self.nodes() {
                if lp[i] != 0.0 {
                    lp[i] *= factor.sample(&mut rng);
                }
                if lq[i] != 0.0 {
                    lq[i] *= factor.sample(&mut rng);
                }
            }
            out.push(self.injection(&lp, &lq));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub samples: Vec<InjectionVector>,
    pub seed: u64,
    pub hypercube_fraction: f64,
    pub topology_label: String,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn empty(fraction: f64) -> Self {
        SampleSet {
            samples: Vec::new(),
            seed: 0,
            hypercube_fraction: fraction,
            topology_label: String::new(),
        }
    }
}

/// Draws `count` injection vectors from the case's load hypercube.
pub fn sample_injections(
    case: &GridCase,
    fraction: f64,
    count: usize,
    seed: u64,
) -> Result<SampleSet> {
    if count == 0 {
        return Err(Error::Argument("sample count must be positive".into()));
    }
    let samples = LoadHypercube::from_case(case).sample(fraction, count, seed)?;
    Ok(SampleSet {
        samples,
        seed,
        hypercube_fraction: fraction,
        topology_label: String::new(),
    })
}

/// Per-topology stream: same master seed, label-specific sequence.
pub fn sample_for_topology(
    case: &GridCase,
    fraction: f64,
    count: usize,
    seed: u64,
    label: &str,
) -> Result<SampleSet> {
    let mut set = sample_injections(case, fraction, count, seeds::topology_seed(seed, label))?;
    set.topology_label = label.to_string();
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcase::fixtures::triangle;

    #[test]
    fn zero_fraction_reproduces_base_case() {
        let case = triangle();
        let set = sample_injections(&case, 0.0, 5, 1).unwrap();
        let base = InjectionVector::base_case(&case);
        assert!(set.samples.iter().all(|s| *s == base));
    }

    #[test]
    fn samples_stay_in_band_and_replay() {
        let case = triangle();
        let cube = LoadHypercube::from_case(&case);
        let a = sample_injections(&case, 0.1, 200, 7).unwrap();
        let b = sample_injections(&case, 0.1, 200, 7).unwrap();
        assert_eq!(a, b);
        for s in &a.samples {
            let (lp, lq) = cube.loads_of(s);
            for i in 0..cube.nodes() {
                for (l, base) in [(lp[i], cube.load_p[i]), (lq[i], cube.load_q[i])] {
                    if base == 0.0 {
                        assert!(l.abs() < 1e-15);
                    } else {
                        let r = l / base;
                        assert!((0.9 - 1e-12..=1.1 + 1e-12).contains(&r), "ratio {r}");
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let case = triangle();
        assert!(sample_injections(&case, 0.1, 0, 1).is_err());
        assert!(sample_injections(&case, 1.0, 3, 1).is_err());
        assert!(sample_injections(&case, -0.1, 3, 1).is_err());
    }

    #[test]
    fn topology_streams_differ() {
        let case = triangle();
        let a = sample_for_topology(&case, 0.1, 3, 7, "base").unwrap();
        let b = sample_for_topology(&case, 0.1, 3, 7, "N-1:2").unwrap();
        assert_ne!(a.samples, b.samples);
        assert_eq!(a.topology_label, "base");
    }
}
