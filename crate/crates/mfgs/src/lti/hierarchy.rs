use super::{assemble_closed_loop, ClosedLoop, Controller, DescriptorPlant};
use crate::error::{Error, Result};

/// Plants ordered from cheapest (level 1) to the reference model (level L).
#[derive(Clone, Debug)]
pub struct ModelHierarchy {
    plants: Vec<DescriptorPlant>,
}

impl ModelHierarchy {
    /// Checks that external dimensions agree across levels and that state
    /// dimensions do not decrease.
    pub fn new(plants: Vec<DescriptorPlant>) -> Result<Self> {
        if plants.is_empty() {
            return Err(Error::InvalidParameter("model hierarchy needs at least one level".into()));
        }
        let first = plants[0].dims();
        for (idx, p) in plants.iter().enumerate().skip(1) {
            let d = p.dims();
            let level = idx + 1;
            for (what, a, b) in [("m1", first.m1, d.m1), ("m2", first.m2, d.m2), ("p1", first.p1, d.p1), ("p2", first.p2, d.p2)] {
                if a != b {
                    return Err(Error::LevelMismatch {
                        first: 1,
                        second: level,
                        what,
                        a,
                        b,
                    });
                }
            }
            let prev = plants[idx - 1].dims().n;
            if d.n < prev {
                return Err(Error::LevelMismatch {
                    first: idx,
                    second: level,
                    what: "state dimension ordering",
                    a: prev,
                    b: d.n,
                });
            }
        }
        Ok(Self { plants })
    }

    pub fn single(plant: DescriptorPlant) -> Self {
        Self { plants: vec![plant] }
    }

    /// Number of levels `L`.
    pub fn levels(&self) -> usize {
        self.plants.len()
    }

    /// Plant at a 1-based level.
    pub fn plant(&self, level: usize) -> Result<&DescriptorPlant> {
        if level == 0 || level > self.plants.len() {
            return Err(Error::LevelIndex {
                level,
                levels: self.plants.len(),
            });
        }
        Ok(&self.plants[level - 1])
    }

    pub fn top(&self) -> &DescriptorPlant {
        self.plants.last().expect("hierarchy is nonempty")
    }

    pub fn plants(&self) -> &[DescriptorPlant] {
        &self.plants
    }

    /// Level-tagged closed loop.
    pub fn closed_loop(&self, level: usize, k: &Controller) -> Result<ClosedLoop> {
        let mut cl = assemble_closed_loop(self.plant(level)?, k)?;
        cl.level = Some(level);
        Ok(cl)
    }

    /// Top-level hierarchy containing only the reference plant.
    pub fn top_only(&self) -> ModelHierarchy {
        ModelHierarchy::single(self.top().clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{make_normalized_lqg, Layout};
    use faer::Mat;

    fn heatish(n: usize, p: usize) -> DescriptorPlant {
        let a = Mat::from_fn(n, n, |i, j| if i == j { -2.0 } else if i.abs_diff(j) == 1 { 1.0 } else { 0.0 });
        make_normalized_lqg(Mat::identity(n, n), a, Mat::from_fn(n, 1, |_, _| 1.0), Mat::from_fn(p, n, |_, _| 1.0)).unwrap()
    }

    #[test]
    fn mismatched_p2_names_both_levels() {
        let err = ModelHierarchy::new(vec![heatish(3, 1), heatish(5, 2)]).unwrap_err();
        match err {
            Error::LevelMismatch { first, second, .. } => assert_eq!((first, second), (1, 2)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn closed_loop_carries_level() {
        let h = ModelHierarchy::new(vec![heatish(3, 1), heatish(6, 1)]).unwrap();
        let k = Controller::zeros(Layout::new(1, 1, 1, true));
        assert_eq!(h.closed_loop(2, &k).unwrap().level, Some(2));
        assert!(h.closed_loop(3, &k).is_err());
    }

    #[test]
    fn decreasing_state_dims_rejected() {
        assert!(ModelHierarchy::new(vec![heatish(6, 1), heatish(3, 1)]).is_err());
    }
}
