//! Attribute-conjunction counting instances.
//!
//! A scene is a set of objects over a small attribute vocabulary (3 colors x
//! 3 shapes x 2 sizes) encoded as concatenated one-hot blocks plus feature
//! noise. The query fixes a value for one or more attribute groups; the
//! ground-truth count is the number of objects matching every constrained
//! group, planted exactly and recomputable by scanning the scene.

use std::io::Write;

use super::{matrix_rows, write_rows_csv};
use crate::error::{CoreError, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, SplitMix64};

/// Attribute group cardinalities: colors, shapes, sizes.
pub const GROUP_SIZES: [usize; 3] = [3, 3, 2];

/// Total one-hot width (3 + 3 + 2).
pub const ATTR_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct CountingConfig {
    /// Objects per scene; count classes run 0..=objects.
    pub objects: usize,
    /// Std-dev of the feature noise on the one-hot blocks.
    pub sigma: f64,
    /// Inclusive range of planted counts (stratification control). The
    /// breakdown between single-object and multi-object queries needs both
    /// sides populated, which the default full range provides.
    pub count_min: usize,
    pub count_max: usize,
    pub train_size: usize,
    pub test_size: usize,
}

impl Default for CountingConfig {
    fn default() -> Self {
        CountingConfig {
            objects: 5,
            sigma: 0.05,
            count_min: 0,
            count_max: 5,
            train_size: 512,
            test_size: 256,
        }
    }
}

impl CountingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.objects == 0 {
            return Err(CoreError::config("at least one object per scene"));
        }
        if self.sigma < 0.0 {
            return Err(CoreError::config("sigma must be non-negative"));
        }
        if self.count_min > self.count_max || self.count_max > self.objects {
            return Err(CoreError::config(format!(
                "count range [{}, {}] invalid for {} objects",
                self.count_min, self.count_max, self.objects
            )));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(CoreError::config("split sizes must be positive"));
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.objects + 1
    }
}

/// One counting scene.
#[derive(Debug, Clone)]
pub struct CountingInstance {
    /// `objects x 8` noisy one-hot blocks.
    pub objects: Matrix,
    /// Clean attribute values per object: (color, shape, size).
    pub attributes: Vec<[usize; 3]>,
    /// `1 x 8` conjunction encoding: one-hot of the required value in each
    /// constrained group, zeros in unconstrained groups.
    pub query: Matrix,
    /// Required value per group, `None` when the group is unconstrained.
    pub query_values: [Option<usize>; 3],
    /// Number of objects matching the full conjunction.
    pub count: usize,
    /// Number of distinct queried objects; equals `count` in this task
    /// family and drives the single- vs multi-object breakdown.
    pub n_queried: usize,
}

#[derive(Debug, Clone)]
pub struct CountingSplits {
    pub train: Vec<CountingInstance>,
    pub test: Vec<CountingInstance>,
}

/// Recompute the count by scanning the noisy scene: per attribute group,
/// an object is decoded to its largest coordinate, and it matches when every
/// constrained group agrees.
pub fn scan_count(objects: &Matrix, query_values: &[Option<usize>; 3]) -> usize {
    (0..objects.rows())
        .filter(|&r| {
            let row = objects.row(r);
            let mut offset = 0;
            for (g, &card) in GROUP_SIZES.iter().enumerate() {
                let block = &row[offset..offset + card];
                let decoded = block
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                if let Some(want) = query_values[g] {
                    if decoded != want {
                        return false;
                    }
                }
                offset += card;
            }
            true
        })
        .count()
}

pub fn gen_counting(cfg: &CountingConfig, seed: u64) -> Result<CountingSplits> {
    cfg.validate()?;
    let train = gen_split(cfg, cfg.train_size, derive_seed(seed, 2))?;
    let test = gen_split(cfg, cfg.test_size, derive_seed(seed, 3))?;
    Ok(CountingSplits { train, test })
}

fn gen_split(cfg: &CountingConfig, size: usize, seed: u64) -> Result<Vec<CountingInstance>> {
    let mut rng = SplitMix64::new(seed);
    (0..size).map(|_| gen_instance(cfg, &mut rng)).collect()
}

fn gen_instance(cfg: &CountingConfig, rng: &mut SplitMix64) -> Result<CountingInstance> {
    // query: constrain 1..=3 groups with uniform values
    let n_groups = 1 + rng.next_below(3);
    let mut group_order = [0usize, 1, 2];
    rng.shuffle(&mut group_order);
    let mut query_values: [Option<usize>; 3] = [None; 3];
    for &gidx in group_order.iter().take(n_groups) {
        query_values[gidx] = Some(rng.next_below(GROUP_SIZES[gidx]));
    }

    // planted count, uniform over the configured range
    let span = cfg.count_max - cfg.count_min + 1;
    let count = cfg.count_min + rng.next_below(span);

    // matching objects satisfy every constrained group; the rest get a
    // deliberate mismatch in one constrained group
    let mut attributes: Vec<[usize; 3]> = Vec::with_capacity(cfg.objects);
    for i in 0..cfg.objects {
        let mut attr = [
            rng.next_below(GROUP_SIZES[0]),
            rng.next_below(GROUP_SIZES[1]),
            rng.next_below(GROUP_SIZES[2]),
        ];
        if i < count {
            for g in 0..3 {
                if let Some(v) = query_values[g] {
                    attr[g] = v;
                }
            }
        } else {
            let flip = group_order[rng.next_below(n_groups)];
            let want = query_values[flip].expect("constrained group");
            let other = (want + 1 + rng.next_below(GROUP_SIZES[flip] - 1)) % GROUP_SIZES[flip];
            attr[flip] = other;
            // any other constrained group may match or not, at random
        }
        attributes.push(attr);
    }
    rng.shuffle(&mut attributes);

    let object_rows: Vec<Vec<f64>> = attributes
        .iter()
        .map(|attr| {
            let mut row = vec![0.0; ATTR_DIM];
            let mut offset = 0;
            for (g, &card) in GROUP_SIZES.iter().enumerate() {
                row[offset + attr[g]] = 1.0;
                offset += card;
            }
            for v in row.iter_mut() {
                *v += cfg.sigma * rng.next_gaussian();
            }
            row
        })
        .collect();
    let objects = Matrix::from_rows(object_rows)?;

    let mut query_row = vec![0.0; ATTR_DIM];
    let mut offset = 0;
    for (g, &card) in GROUP_SIZES.iter().enumerate() {
        if let Some(v) = query_values[g] {
            query_row[offset + v] = 1.0;
        }
        offset += card;
    }
    let query = Matrix::new(1, ATTR_DIM, query_row)?;

    // the planted construction and the independent scan must agree
    let scanned = scan_count(&objects, &query_values);
    if scanned != count {
        return Err(CoreError::config(format!(
            "planted count {count} disagrees with scanned count {scanned}"
        )));
    }

    Ok(CountingInstance {
        objects,
        attributes,
        query,
        query_values,
        count,
        n_queried: count,
    })
}

/// Text dump for inspection.
pub fn write_counting_csv<W: Write>(split: &[CountingInstance], out: &mut W) -> std::io::Result<()> {
    let rows = split.iter().enumerate().flat_map(|(idx, inst)| {
        matrix_rows(idx, "object", &inst.objects)
            .chain(matrix_rows(idx, "query", &inst.query))
            .chain(std::iter::once((
                idx,
                "label",
                0,
                vec![inst.count as f64, inst.n_queried as f64],
            )))
    });
    write_rows_csv(out, ATTR_DIM, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_match_query_counts_zero() {
        // all objects red, query green (group 0 value 1)
        let rows = vec![vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0]; 4];
        let objects = Matrix::from_rows(rows).unwrap();
        assert_eq!(scan_count(&objects, &[Some(1), None, None]), 0);
    }

    #[test]
    fn identical_matching_objects_count_all() {
        let rows = vec![vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]; 5];
        let objects = Matrix::from_rows(rows).unwrap();
        assert_eq!(scan_count(&objects, &[Some(1), Some(0), Some(1)]), 5);
    }

    #[test]
    fn planted_counts_survive_rescans() {
        let cfg = CountingConfig {
            train_size: 64,
            test_size: 64,
            ..CountingConfig::default()
        };
        let splits = gen_counting(&cfg, 13).unwrap();
        for inst in splits.train.iter().chain(&splits.test) {
            assert_eq!(scan_count(&inst.objects, &inst.query_values), inst.count);
            assert_eq!(inst.n_queried, inst.count);
        }
    }

    #[test]
    fn labels_are_roughly_uniform() {
        let cfg = CountingConfig {
            train_size: 10_000,
            test_size: 1,
            ..CountingConfig::default()
        };
        let splits = gen_counting(&cfg, 71).unwrap();
        let classes = cfg.classes();
        let mut hist = vec![0usize; classes];
        for inst in &splits.train {
            hist[inst.count] += 1;
        }
        let expected = 10_000.0 / classes as f64;
        for (c, &n) in hist.iter().enumerate() {
            let ratio = n as f64 / expected;
            assert!(
                (0.8..=1.2).contains(&ratio),
                "class {c} frequency off uniform: {n}"
            );
        }
    }

    #[test]
    fn restricted_range_is_respected() {
        let cfg = CountingConfig {
            count_min: 2,
            count_max: 5,
            train_size: 50,
            test_size: 50,
            ..CountingConfig::default()
        };
        let splits = gen_counting(&cfg, 5).unwrap();
        assert!(splits.test.iter().all(|i| (2..=5).contains(&i.count)));
    }

    #[test]
    fn determinism() {
        let cfg = CountingConfig {
            train_size: 8,
            test_size: 8,
            ..CountingConfig::default()
        };
        let a = gen_counting(&cfg, 2).unwrap();
        let b = gen_counting(&cfg, 2).unwrap();
        for (x, y) in a.test.iter().zip(&b.test) {
            assert_eq!(x.objects, y.objects);
            assert_eq!(x.count, y.count);
        }
    }

    #[test]
    fn bad_range_rejected() {
        let cfg = CountingConfig {
            count_min: 4,
            count_max: 2,
            ..CountingConfig::default()
        };
        assert!(gen_counting(&cfg, 0).is_err());
    }
}
