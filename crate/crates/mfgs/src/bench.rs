//! Multi-level 1D heat-equation benchmark.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{make_general_plant, make_normalized_lqg, DescriptorPlant, ModelHierarchy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Lqg,
    General,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MassMatrix {
    #[default]
    Identity,
    /// `E = tridiag(1, 4, 1) / 6`, the linear-element mass matrix divided by `h`.
    Consistent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatSpec {
    /// Interior grid sizes, strictly increasing.
    pub levels: Vec<usize>,
    pub num_controls: usize,
    pub num_outputs: usize,
    pub diffusivity: f64,
    pub formulation: Formulation,
    pub mass: MassMatrix,
    /// Width of each actuator and sensor window on [0, 1].
    pub width: f64,
}

impl Default for HeatSpec {
    fn default() -> Self {
        Self {
            levels: vec![16, 64, 256],
            num_controls: 1,
            num_outputs: 1,
            diffusivity: 0.01,
            formulation: Formulation::Lqg,
            mass: MassMatrix::Identity,
            width: 0.1,
        }
    }
}

impl HeatSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.levels.is_empty() {
            return bad("heat spec needs at least one level".into());
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("heat levels must be strictly increasing, got {:?}", self.levels));
        }
        let nmin = self.levels[0];
        if self.num_controls == 0 || self.num_outputs == 0 || self.num_controls > nmin || self.num_outputs > nmin {
            return bad(format!(
                "need 1 <= m, p <= {nmin}, got m = {} and p = {}",
                self.num_controls, self.num_outputs
            ));
        }
        if !(self.diffusivity > 0.0 && self.diffusivity.is_finite()) {
            return bad(format!("diffusivity must be positive, got {}", self.diffusivity));
        }
        let (m, p) = (self.num_controls, self.num_outputs);
        let spacing = (0.5 / m as f64).min(0.5 / p as f64);
        if !(self.width > 0.0 && self.width <= spacing) {
            return bad(format!("window width {} must lie in (0, {spacing}]", self.width));
        }
        Ok(())
    }

    /// Actuators are spread over the left half of the rod.
    pub fn actuator_centers(&self) -> Vec<f64> {
        spread(self.num_controls, 0.0)
    }

    /// Sensors are spread over the right half of the rod.
    pub fn sensor_centers(&self) -> Vec<f64> {
        spread(self.num_outputs, 0.5)
    }
}

fn spread(k: usize, offset: f64) -> Vec<f64> {
    (0..k).map(|i| offset + (2 * i + 1) as f64 / (4 * k) as f64).collect()
}

fn tridiag(n: usize, lo: f64, d: f64, hi: f64) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            d
        } else if j == i + 1 {
            hi
        } else if i == j + 1 {
            lo
        } else {
            0.0
        }
    })
}

/// `A = kappa / h^2 * tridiag(1, -2, 1)` on `n` interior nodes, `h = 1/(n+1)`.
pub fn heat_operator(n: usize, diffusivity: f64) -> Mat<f64> {
    let h = 1.0 / (n + 1) as f64;
    let s = diffusivity / (h * h);
    tridiag(n, s, -2.0 * s, s)
}

/// Cell-overlap weights of the window `[c - w/2, c + w/2]`, one per node.
/// They sum to `w / h` when the window lies inside the rod.
fn window(n: usize, c: f64, w: f64) -> Vec<f64> {
    let h = 1.0 / (n + 1) as f64;
    (1..=n)
        .map(|i| {
            let xi = i as f64 * h;
            let lo = (xi - 0.5 * h).max(c - 0.5 * w);
            let hi = (xi + 0.5 * h).min(c + 0.5 * w);
            (hi - lo).max(0.0) / h
        })
        .collect()
}

/// `(E, A, B, C)` of one level.
pub fn heat_level(spec: &HeatSpec, n: usize) -> (Mat<f64>, Mat<f64>, Mat<f64>, Mat<f64>) {
    let h = 1.0 / (n + 1) as f64;
    let w = spec.width;
    let e = match spec.mass {
        MassMatrix::Identity => Mat::identity(n, n),
        MassMatrix::Consistent => tridiag(n, 1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0),
    };
    let a = heat_operator(n, spec.diffusivity);
    let act: Vec<Vec<f64>> = spec.actuator_centers().iter().map(|&c| window(n, c, w)).collect();
    let sen: Vec<Vec<f64>> = spec.sensor_centers().iter().map(|&c| window(n, c, w)).collect();
    // source density 1/w on the window; sensor is the window average
    let b = Mat::from_fn(n, act.len(), |i, j| act[j][i] / w);
    let c = Mat::from_fn(sen.len(), n, |i, j| sen[i][j] * h / w);
    (e, a, b, c)
}

pub fn build_heat_plant(spec: &HeatSpec, n: usize) -> Result<DescriptorPlant> {
    let (e, a, b, c) = heat_level(spec, n);
    match spec.formulation {
        Formulation::Lqg => make_normalized_lqg(e, a, b, c),
        Formulation::General => make_general_plant(e, a, b.clone(), b, c),
    }
}

pub fn build_heat_hierarchy(spec: &HeatSpec) -> Result<ModelHierarchy> {
    spec.validate()?;
    let plants = spec.levels.iter().map(|&n| build_heat_plant(spec, n)).collect::<Result<Vec<_>>>()?;
    ModelHierarchy::new(plants)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{spectral_abscissa, transfer_eval};
    use crate::lti::ClosedLoop;
    use faer::c64;

    fn open_loop(p: &DescriptorPlant, b: Mat<f64>, c: Mat<f64>) -> ClosedLoop {
        ClosedLoop::from_matrices(p.e().to_owned(), p.a().to_owned(), b, c, Mat::zeros(1, 1)).unwrap()
    }

    #[test]
    fn operator_at_three_nodes() {
        let a = heat_operator(3, 1.0);
        let expect = tridiag(3, 16.0, -32.0, 16.0);
        assert_eq!(a, expect);
        let cl = ClosedLoop::standard(a, Mat::zeros(3, 1), Mat::zeros(1, 3), Mat::zeros(1, 1)).unwrap();
        let alpha = spectral_abscissa(&cl, Default::default()).unwrap().alpha;
        let exact = 16.0 * (-2.0 + 2.0 * (std::f64::consts::PI / 4.0).cos());
        assert!((alpha - exact).abs() < 1e-12, "{alpha} {exact}");
        assert!((exact + 9.3726).abs() < 1e-4);
    }

    #[test]
    fn every_level_is_open_loop_stable() {
        for mass in [MassMatrix::Identity, MassMatrix::Consistent] {
            let spec = HeatSpec { mass, ..Default::default() };
            let hier = build_heat_hierarchy(&spec).unwrap();
            for p in hier.plants() {
                let (b, c) = (p.b2().to_owned(), p.c2().to_owned());
                let a = spectral_abscissa(&open_loop(p, b, c), Default::default()).unwrap().alpha;
                assert!(a < 0.0);
            }
        }
    }

    #[test]
    fn windows_integrate_to_one() {
        let spec = HeatSpec::default();
        for n in [16, 64, 256] {
            let (_, _, b, c) = heat_level(&spec, n);
            let h = 1.0 / (n + 1) as f64;
            let sb: f64 = (0..n).map(|i| b[(i, 0)]).sum::<f64>() * h;
            let sc: f64 = (0..n).map(|j| c[(0, j)]).sum();
            assert!((sb - 1.0).abs() < 1e-12 && (sc - 1.0).abs() < 1e-12, "{sb} {sc}");
        }
    }

    #[test]
    fn static_gain_converges_across_levels() {
        // Green's function of -u'' on [0, 1] gives G(0) = 0.25 * 0.25 / kappa
        // for point actuation at 0.25 and sensing at 0.75
        for mass in [MassMatrix::Identity, MassMatrix::Consistent] {
            let spec = HeatSpec { mass, ..Default::default() };
            let hier = build_heat_hierarchy(&spec).unwrap();
            let g0: Vec<f64> = hier
                .plants()
                .iter()
                .map(|p| {
                    let cl = open_loop(p, p.b2().to_owned(), p.c2().to_owned());
                    transfer_eval(&cl, c64::new(0.0, 0.0)).unwrap()[(0, 0)].re
                })
                .collect();
            let top = g0[2];
            assert!((g0[0] - top).abs() <= 0.1 * top.abs(), "{g0:?}");
            assert!((top - 6.25).abs() < 0.05 * 6.25, "{g0:?}");
        }
    }

    #[test]
    fn shared_external_dims() {
        for formulation in [Formulation::Lqg, Formulation::General] {
            let spec = HeatSpec {
                num_controls: 2,
                num_outputs: 3,
                width: 0.05,
                formulation,
                ..Default::default()
            };
            let hier = build_heat_hierarchy(&spec).unwrap();
            let d = hier.top().dims();
            assert_eq!((d.n, d.m2, d.p2), (256, 2, 3));
        }
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            HeatSpec { levels: vec![], ..Default::default() },
            HeatSpec { levels: vec![16, 16], ..Default::default() },
            HeatSpec { diffusivity: 0.0, ..Default::default() },
            HeatSpec { num_controls: 0, ..Default::default() },
            HeatSpec { levels: vec![2, 8], num_outputs: 3, width: 0.01, ..Default::default() },
        ];
        for s in bad {
            assert!(build_heat_hierarchy(&s).is_err(), "{s:?}");
        }
    }

    #[test]
    fn deterministic() {
        let s = HeatSpec::default();
        let a = build_heat_hierarchy(&s).unwrap();
        let b = build_heat_hierarchy(&s).unwrap();
        for (p, q) in a.plants().iter().zip(b.plants()) {
            for ((_, x), (_, y)) in p.matrices().into_iter().zip(q.matrices()) {
                assert_eq!(x, y);
            }
        }
    }
}
