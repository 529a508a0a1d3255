//! Splitting a training set into per-client shards.
//!
//! Five regimes: equal-size IID shards, IID shards of differing sizes,
//! single-class shards, single-class shards of differing sizes, and
//! disjoint fractional splits of one global shuffle.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Client sizes for imbalanced runs: a ladder averaging 600 per client.
pub const DEFAULT_IMBALANCED_SIZES: [usize; 10] =
    [150, 250, 350, 450, 550, 650, 750, 850, 950, 1050];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SchemeKind {
    /// Every client draws `per_client` indices uniformly without replacement
    /// from the whole set; different clients may overlap.
    IidFixed { n_clients: usize, per_client: usize },
    /// As `IidFixed` with one size per client.
    Imbalanced { sizes: Vec<usize> },
    /// Client `k` draws `per_client` indices of class `classes[k]` only.
    Skewed {
        classes: Vec<usize>,
        per_client: usize,
    },
    /// Client `k` draws `sizes[k]` indices of class `classes[k]` only.
    ImbalancedSkewed {
        classes: Vec<usize>,
        sizes: Vec<usize>,
    },
    /// Disjoint consecutive blocks of one shuffle, `floor(f * n)` each, the
    /// remainder going to the last client.
    Fractions { fractions: Vec<f64> },
}

impl SchemeKind {
    pub fn n_clients(&self) -> usize {
        match self {
            SchemeKind::IidFixed { n_clients, .. } => *n_clients,
            SchemeKind::Imbalanced { sizes } => sizes.len(),
            SchemeKind::Skewed { classes, .. } => classes.len(),
            SchemeKind::ImbalancedSkewed { classes, .. } => classes.len(),
            SchemeKind::Fractions { fractions } => fractions.len(),
        }
    }

    /// Whether shards are guaranteed pairwise disjoint.
    pub fn is_disjoint(&self) -> bool {
        matches!(self, SchemeKind::Fractions { .. })
    }

    /// Whether every shard holds a single label.
    pub fn is_single_label(&self) -> bool {
        matches!(
            self,
            SchemeKind::Skewed { .. } | SchemeKind::ImbalancedSkewed { .. }
        )
    }

    fn validate(&self) -> Result<()> {
        if self.n_clients() == 0 {
            return Err(Error::param("a partition needs at least one client"));
        }
        match self {
            SchemeKind::IidFixed { per_client, .. } | SchemeKind::Skewed { per_client, .. } => {
                if *per_client == 0 {
                    return Err(Error::param("shard size must be at least 1"));
                }
            }
            SchemeKind::Imbalanced { sizes } => {
                if sizes.contains(&0) {
                    return Err(Error::param("shard sizes must be at least 1"));
                }
            }
            SchemeKind::ImbalancedSkewed { classes, sizes } => {
                if classes.len() != sizes.len() {
                    return Err(Error::param(format!(
                        "{} class assignments but {} sizes",
                        classes.len(),
                        sizes.len()
                    )));
                }
                if sizes.contains(&0) {
                    return Err(Error::param("shard sizes must be at least 1"));
                }
            }
            SchemeKind::Fractions { fractions } => {
                if fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
                    return Err(Error::param("fractions must lie in (0, 1]"));
                }
                let sum: f64 = fractions.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::param(format!("fractions sum to {sum}, not 1")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionScheme {
    #[serde(flatten)]
    pub kind: SchemeKind,
    pub seed: u64,
}

/// Zero-padded so lexicographic order equals numeric order.
pub fn client_ids(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(2);
    (0..n).map(|k| format!("client-{k:0width$}")).collect()
}

/// Shards keyed by client id; persisted as `{scheme, seed, shards}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub scheme: SchemeKind,
    pub seed: u64,
    pub shards: BTreeMap<String, Vec<usize>>,
}

impl Partition {
    pub fn client_ids(&self) -> impl Iterator<Item = &str> {
        self.shards.keys().map(String::as_str)
    }

    pub fn shard(&self, client_id: &str) -> Option<&[usize]> {
        self.shards.get(client_id).map(Vec::as_slice)
    }
}

fn draw(
    population: &[usize],
    k: usize,
    what: &str,
    rng: &mut impl rand::Rng,
) -> Result<Vec<usize>> {
    if k > population.len() {
        return Err(Error::param(format!(
            "requested {k} samples from {what}, which has only {}",
            population.len()
        )));
    }
    Ok(index::sample(rng, population.len(), k)
        .into_iter()
        .map(|i| population[i])
        .collect())
}

pub fn make_partition(scheme: &PartitionScheme, labels: &[usize]) -> Result<Partition> {
    if labels.is_empty() {
        return Err(Error::param("cannot partition an empty dataset"));
    }
    scheme.kind.validate()?;
    let ids = client_ids(scheme.kind.n_clients());
    let all: Vec<usize> = (0..labels.len()).collect();
    let by_class =
        |c: usize| -> Vec<usize> { all.iter().copied().filter(|&i| labels[i] == c).collect() };
    let client_rng = |k: usize| seed::stream(scheme.seed, k as u64);

    let shards: Vec<Vec<usize>> = match &scheme.kind {
        SchemeKind::IidFixed {
            n_clients,
            per_client,
        } => (0..*n_clients)
            .map(|k| draw(&all, *per_client, "the dataset", &mut client_rng(k)))
            .collect::<Result<_>>()?,
        SchemeKind::Imbalanced { sizes } => sizes
            .iter()
            .enumerate()
            .map(|(k, &n)| draw(&all, n, "the dataset", &mut client_rng(k)))
            .collect::<Result<_>>()?,
        SchemeKind::Skewed {
            classes,
            per_client,
        } => classes
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                draw(
                    &by_class(c),
                    *per_client,
                    &format!("class {c}"),
                    &mut client_rng(k),
                )
            })
            .collect::<Result<_>>()?,
        SchemeKind::ImbalancedSkewed { classes, sizes } => classes
            .iter()
            .zip(sizes)
            .enumerate()
            .map(|(k, (&c, &n))| draw(&by_class(c), n, &format!("class {c}"), &mut client_rng(k)))
            .collect::<Result<_>>()?,
        SchemeKind::Fractions { fractions } => {
            let n = labels.len();
            let mut order = all.clone();
            order.shuffle(&mut seed::stream(scheme.seed, u64::MAX));
            let mut shards = Vec::with_capacity(fractions.len());
            let mut start = 0;
            for (k, f) in fractions.iter().enumerate() {
                let len = if k + 1 == fractions.len() {
                    n - start
                } else {
                    (f * n as f64).floor() as usize
                };
                if len == 0 || start + len > n {
                    return Err(Error::param(format!(
                        "fraction {f} of {n} samples gives an empty or overflowing shard"
                    )));
                }
                shards.push(order[start..start + len].to_vec());
                start += len;
            }
            shards
        }
    };

    Ok(Partition {
        scheme: scheme.kind.clone(),
        seed: scheme.seed,
        shards: ids.into_iter().zip(shards).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_sort_numerically() {
        let ids = client_ids(12);
        assert_eq!(ids[0], "client-00");
        assert_eq!(ids[11], "client-11");
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(sorted, ids);
    }

    #[test]
    fn fractions_block_sizes() {
        let labels = vec![0usize; 17_903];
        let scheme = PartitionScheme {
            kind: SchemeKind::Fractions {
                fractions: vec![0.5, 0.3, 0.2],
            },
            seed: 4,
        };
        let p = make_partition(&scheme, &labels).unwrap();
        let sizes: Vec<usize> = p.shards.values().map(Vec::len).collect();
        assert_eq!(sizes, vec![8_951, 5_370, 3_582]);
        let mut all: Vec<usize> = p.shards.values().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..17_903).collect::<Vec<_>>());
    }

    #[test]
    fn single_fraction_is_everything() {
        let labels = vec![1usize; 50];
        let scheme = PartitionScheme {
            kind: SchemeKind::Fractions {
                fractions: vec![1.0],
            },
            seed: 0,
        };
        let p = make_partition(&scheme, &labels).unwrap();
        let mut shard = p.shard("client-00").unwrap().to_vec();
        shard.sort_unstable();
        assert_eq!(shard, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn oversized_requests_fail() {
        let labels = vec![0, 0, 1, 1, 1];
        let skewed = PartitionScheme {
            kind: SchemeKind::Skewed {
                classes: vec![0, 1],
                per_client: 3,
            },
            seed: 0,
        };
        assert!(matches!(
            make_partition(&skewed, &labels),
            Err(Error::Parameter(_))
        ));
        let iid = PartitionScheme {
            kind: SchemeKind::IidFixed {
                n_clients: 2,
                per_client: 6,
            },
            seed: 0,
        };
        assert!(make_partition(&iid, &labels).is_err());
        let bad_sum = PartitionScheme {
            kind: SchemeKind::Fractions {
                fractions: vec![0.5, 0.4],
            },
            seed: 0,
        };
        assert!(make_partition(&bad_sum, &labels).is_err());
    }

    #[test]
    fn json_layout() {
        let scheme = PartitionScheme {
            kind: SchemeKind::IidFixed {
                n_clients: 2,
                per_client: 2,
            },
            seed: 8,
        };
        let p = make_partition(&scheme, &[0, 1, 0, 1]).unwrap();
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v["scheme"]["variant"], "iid_fixed");
        assert_eq!(v["seed"], 8);
        assert_eq!(v["shards"]["client-01"].as_array().unwrap().len(), 2);
        let back: Partition = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}
