//! Training-data refinement: cluster traces with K-means on their resampled
//! state trajectories, then keep a dissimilar representative subset per
//! cluster.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::scalar::{fromf, tof, Real};
use crate::types::{flatten_trajectory, resample_states, DataTrace};

/// Clusters smaller than this are selected by exhaustive max-min search;
/// larger ones fall back to greedy farthest-point selection.
const EXACT_SELECTION_LIMIT: usize = 12;

/// Parameters for [`refine_training_data`].
#[derive(Debug, Clone)]
pub struct RefineParams<T: Real> {
    /// Number of clusters.
    pub k: usize,
    /// Selection fraction in (0, 1].
    pub rate: T,
    /// Trajectory length used for distance computation.
    pub resample_points: usize,
    pub seed: u64,
}

impl<T: Real> RefineParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("cluster count must be at least 1".into()));
        }
        if !(self.rate > T::zero() && self.rate <= T::one()) {
            return Err(Error::Config("selection rate must be in (0, 1]".into()));
        }
        if self.resample_points < 2 {
            return Err(Error::Config("resample points must be at least 2".into()));
        }
        Ok(())
    }
}

/// Refinement output: the selected traces plus the cluster partition over
/// them (consumed by region building), and the full assignment map for
/// export.
#[derive(Debug, Clone)]
pub struct Refined<T: Real> {
    /// Union of the per-cluster selections, grouped by cluster.
    pub selected: Vec<DataTrace<T>>,
    /// Partition of `selected` by cluster: indices into `selected`.
    pub clusters: Vec<Vec<usize>>,
    /// `(input trace index, cluster id)` for every input trace.
    pub assignments: Vec<(usize, usize)>,
}

/// Euclidean distance between flattened, resampled state trajectories.
pub fn trace_distance<T: Real>(
    a: &DataTrace<T>,
    b: &DataTrace<T>,
    resample_points: usize,
) -> Result<T> {
    if a.state_dim() != b.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "trace distance",
            expected: a.state_dim(),
            actual: b.state_dim(),
        });
    }
    let fa = flatten_trajectory(&resample_states(a.states(), resample_points)?)?;
    let fb = flatten_trajectory(&resample_states(b.states(), resample_points)?)?;
    Ok(euclidean(&fa, &fb))
}

fn euclidean<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

fn dist2<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

fn features<T: Real>(traces: &[DataTrace<T>], resample_points: usize) -> Result<Vec<Vec<T>>> {
    traces
        .iter()
        .map(|t| flatten_trajectory(&resample_states(t.states(), resample_points)?))
        .collect()
}

/// Lloyd's algorithm with k-means++ seeding on flattened resampled
/// trajectories. Returns a partition of trace indices into non-empty
/// clusters, ordered by cluster id with ascending indices.
///
/// When there are fewer traces than requested clusters, the cluster count is
/// reduced to the trace count with a warning.
pub fn kmeans_traces<T: Real>(
    traces: &[DataTrace<T>],
    k: usize,
    seed: u64,
    resample_points: usize,
) -> Result<Vec<Vec<usize>>> {
    if traces.is_empty() {
        return Err(Error::EmptyData("traces to cluster"));
    }
    let n = traces.len();
    let k = if k > n {
        log::warn!("reducing cluster count from {k} to trace count {n}");
        n
    } else {
        k.max(1)
    };
    let feats = features(traces, resample_points)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centroids: Vec<Vec<T>> = Vec::with_capacity(k);
    centroids.push(feats[rng.random_range(0..n)].clone());
    while centroids.len() < k {
        let d2: Vec<T> = feats
            .iter()
            .map(|f| {
                centroids
                    .iter()
                    .map(|c| dist2(f, c))
                    .fold(T::max_value().unwrap(), |a, b| if b < a { b } else { a })
            })
            .collect();
        let total: f64 = d2.iter().map(|&d| tof(d)).sum();
        let idx = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                cum += tof(d);
                if cum > r {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(feats[idx].clone());
    }

    let mut assignments = vec![0usize; n];
    for _ in 0..100 {
        let mut next: Vec<usize> = feats
            .iter()
            .map(|f| {
                let mut best = 0;
                let mut best_d = dist2(f, &centroids[0]);
                for (c, cent) in centroids.iter().enumerate().skip(1) {
                    let d = dist2(f, cent);
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                best
            })
            .collect();

        // Empty-cluster repair: reseed at the point farthest from its
        // assigned centroid (among clusters that can spare a member).
        loop {
            let mut sizes = vec![0usize; k];
            for &a in &next {
                sizes[a] += 1;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                break;
            };
            let donor = (0..n)
                .filter(|&i| sizes[next[i]] > 1)
                .max_by(|&i, &j| {
                    let di = tof(dist2(&feats[i], &centroids[next[i]]));
                    let dj = tof(dist2(&feats[j], &centroids[next[j]]));
                    di.partial_cmp(&dj).unwrap().then(j.cmp(&i))
                })
                .expect("some cluster must have more than one member");
            next[donor] = empty;
            centroids[empty] = feats[donor].clone();
        }

        let converged = next == assignments;
        assignments = next;
        if converged {
            break;
        }
        // Update centroids as cluster means.
        let dim = feats[0].len();
        let mut sums = vec![vec![T::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for d in 0..dim {
                sums[a][d] += feats[i][d];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = T::one() / fromf(counts[c] as f64);
                for d in 0..dim {
                    centroids[c][d] = sums[c][d] * inv;
                }
            }
        }
    }

    let mut clusters = vec![Vec::new(); k];
    for (i, &a) in assignments.iter().enumerate() {
        clusters[a].push(i);
    }
    debug_assert!(clusters.iter().all(|c| !c.is_empty()));
    Ok(clusters)
}

/// Selects `ceil(rate * count)` dissimilar traces from a cluster, returning
/// indices into the slice.
///
/// Small clusters are solved exactly (max-min dispersion over all subsets,
/// lexicographically smallest optimum); larger clusters use greedy
/// farthest-point selection initialized at the maximum-distance pair.
pub fn select_dissimilar<T: Real>(
    traces: &[DataTrace<T>],
    rate: T,
    resample_points: usize,
) -> Result<Vec<usize>> {
    if traces.is_empty() {
        return Err(Error::EmptyData("cluster traces"));
    }
    let n = traces.len();
    if n == 1 {
        return Ok(vec![0]);
    }
    let target = tof(rate * fromf::<T>(n as f64)).ceil() as usize;
    let target = target.clamp(1, n);
    if target == n {
        return Ok((0..n).collect());
    }
    let mut dmat = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = trace_distance(&traces[i], &traces[j], resample_points)?;
            dmat[i][j] = d;
            dmat[j][i] = d;
        }
    }
    Ok(select_maxmin(&dmat, target))
}

fn max_pair<T: Real>(dmat: &[Vec<T>]) -> (usize, usize) {
    let n = dmat.len();
    let mut best = (0, 1);
    for i in 0..n {
        for j in (i + 1)..n {
            if dmat[i][j] > dmat[best.0][best.1] {
                best = (i, j);
            }
        }
    }
    best
}

fn subset_min_dist<T: Real>(dmat: &[Vec<T>], subset: &[usize]) -> T {
    let mut m = T::max_value().unwrap();
    for (a, &i) in subset.iter().enumerate() {
        for &j in &subset[a + 1..] {
            if dmat[i][j] < m {
                m = dmat[i][j];
            }
        }
    }
    m
}

fn select_maxmin<T: Real>(dmat: &[Vec<T>], target: usize) -> Vec<usize> {
    let n = dmat.len();
    if target == 1 {
        let (i, j) = max_pair(dmat);
        return vec![i.min(j)];
    }
    if n <= EXACT_SELECTION_LIMIT {
        // Exhaustive max-min over all subsets, lexicographically first
        // optimum.
        let mut combo: Vec<usize> = (0..target).collect();
        let mut best = combo.clone();
        let mut best_val = subset_min_dist(dmat, &combo);
        while next_combination(&mut combo, n) {
            let v = subset_min_dist(dmat, &combo);
            if v > best_val {
                best_val = v;
                best = combo.clone();
            }
        }
        return best;
    }
    // Greedy farthest-point from the maximum-distance pair.
    let (i, j) = max_pair(dmat);
    let mut selected = vec![i, j];
    while selected.len() < target {
        let mut best_idx = usize::MAX;
        let mut best_d = fromf::<T>(-1.0);
        for cand in 0..n {
            if selected.contains(&cand) {
                continue;
            }
            let d = selected
                .iter()
                .map(|&s| dmat[cand][s])
                .fold(T::max_value().unwrap(), |a, b| if b < a { b } else { a });
            if d > best_d {
                best_d = d;
                best_idx = cand;
            }
        }
        selected.push(best_idx);
    }
    selected.sort_unstable();
    selected
}

fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in (i + 1)..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Full refinement pass: cluster, then keep a dissimilar subset per cluster.
pub fn refine_training_data<T: Real>(
    traces: &[DataTrace<T>],
    params: &RefineParams<T>,
) -> Result<Refined<T>> {
    params.validate()?;
    if traces.is_empty() {
        return Err(Error::EmptyData("traces to refine"));
    }
    let clusters = kmeans_traces(traces, params.k, params.seed, params.resample_points)?;
    let mut assignments: Vec<(usize, usize)> = Vec::with_capacity(traces.len());
    for (cid, members) in clusters.iter().enumerate() {
        for &m in members {
            assignments.push((m, cid));
        }
    }
    assignments.sort_unstable();

    let mut selected = Vec::new();
    let mut selected_clusters = Vec::with_capacity(clusters.len());
    for members in &clusters {
        let cluster_traces: Vec<DataTrace<T>> =
            members.iter().map(|&m| traces[m].clone()).collect();
        let mut chosen = select_dissimilar(&cluster_traces, params.rate, params.resample_points)?;
        chosen.sort_unstable();
        let start = selected.len();
        for &c in &chosen {
            selected.push(cluster_traces[c].clone());
        }
        selected_clusters.push((start..selected.len()).collect());
    }
    Ok(Refined {
        selected,
        clusters: selected_clusters,
        assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ControlInput, State, TraceOrigin};
    use approx::assert_relative_eq;

    /// Constant 1D trace at the given level.
    fn const_trace(level: f64, steps: usize) -> DataTrace<f64> {
        let states = (0..=steps)
            .map(|_| State::new(vec![level]).unwrap())
            .collect();
        let inputs = (0..steps)
            .map(|_| ControlInput::new(vec![0.0]).unwrap())
            .collect();
        DataTrace::new(states, inputs, 1.0, 0, TraceOrigin::Random).unwrap()
    }

    fn ramp_trace(slope: f64, steps: usize) -> DataTrace<f64> {
        let states = (0..=steps)
            .map(|k| State::new(vec![slope * k as f64]).unwrap())
            .collect();
        let inputs = (0..steps)
            .map(|_| ControlInput::new(vec![slope]).unwrap())
            .collect();
        DataTrace::new(states, inputs, 1.0, 0, TraceOrigin::Random).unwrap()
    }

    #[test]
    fn identical_traces_have_zero_distance() {
        let a = const_trace(2.0, 10);
        assert_eq!(trace_distance(&a, &a.clone(), 50).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_distance_is_sqrt_points() {
        let a = const_trace(0.0, 10);
        let b = const_trace(1.0, 10);
        for points in [10, 25, 50] {
            let d = trace_distance(&a, &b, points).unwrap();
            assert_relative_eq!(d, (points as f64).sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn distance_is_symmetric() {
        let a = ramp_trace(0.7, 12);
        let b = ramp_trace(-0.3, 20);
        assert_eq!(
            trace_distance(&a, &b, 50).unwrap(),
            trace_distance(&b, &a, 50).unwrap()
        );
    }

    #[test]
    fn kmeans_recovers_separated_bundles() {
        // Two tight bundles around levels 0 and 100.
        let mut traces = Vec::new();
        for i in 0..6 {
            traces.push(const_trace(i as f64 * 0.1, 8));
        }
        for i in 0..6 {
            traces.push(const_trace(100.0 + i as f64 * 0.1, 8));
        }
        let clusters = kmeans_traces(&traces, 2, 7, 20).unwrap();
        let mut sets: Vec<Vec<usize>> = clusters;
        sets.sort();
        assert_eq!(sets[0], (0..6).collect::<Vec<_>>());
        assert_eq!(sets[1], (6..12).collect::<Vec<_>>());

        // Matches brute-force optimal 2-partition by within-cluster sum of
        // squares.
        let feats = features(&traces, 20).unwrap();
        let (best_mask, _) = brute_force_two_partition(&feats);
        let kmeans_mask: Vec<bool> = {
            let mut mask = vec![false; traces.len()];
            for &i in &sets[1] {
                mask[i] = true;
            }
            mask
        };
        let flipped: Vec<bool> = kmeans_mask.iter().map(|&b| !b).collect();
        assert!(kmeans_mask == best_mask || flipped == best_mask);
    }

    fn brute_force_two_partition(feats: &[Vec<f64>]) -> (Vec<bool>, f64) {
        let n = feats.len();
        let mut best_mask = vec![false; n];
        let mut best = f64::INFINITY;
        for code in 1..(1u32 << (n - 1)) {
            let mask: Vec<bool> = (0..n).map(|i| code & (1 << i) != 0).collect();
            let wcss = [false, true]
                .iter()
                .map(|side| {
                    let members: Vec<&Vec<f64>> = feats
                        .iter()
                        .zip(&mask)
                        .filter(|(_, &m)| m == *side)
                        .map(|(f, _)| f)
                        .collect();
                    if members.is_empty() {
                        return f64::INFINITY;
                    }
                    let dim = members[0].len();
                    let mean: Vec<f64> = (0..dim)
                        .map(|d| members.iter().map(|f| f[d]).sum::<f64>() / members.len() as f64)
                        .collect();
                    members.iter().map(|f| dist2(f, &mean)).sum::<f64>()
                })
                .sum::<f64>();
            if wcss < best {
                best = wcss;
                best_mask = mask;
            }
        }
        (best_mask, best)
    }

    #[test]
    fn kmeans_k_one_and_k_equal_count() {
        let traces: Vec<_> = (0..5).map(|i| const_trace(i as f64 * 10.0, 5)).collect();
        let one = kmeans_traces(&traces, 1, 0, 10).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], (0..5).collect::<Vec<_>>());

        let singletons = kmeans_traces(&traces, 5, 0, 10).unwrap();
        assert_eq!(singletons.len(), 5);
        assert!(singletons.iter().all(|c| c.len() == 1));
    }

    #[test]
    fn kmeans_reduces_k_when_too_few_traces() {
        let traces: Vec<_> = (0..3).map(|i| const_trace(i as f64, 4)).collect();
        let clusters = kmeans_traces(&traces, 10, 0, 10).unwrap();
        assert_eq!(clusters.len(), 3);
    }

    #[test]
    fn select_two_most_dissimilar() {
        let traces = vec![const_trace(0.0, 6), const_trace(1.0, 6), const_trace(10.0, 6)];
        let chosen = select_dissimilar(&traces, 2.0 / 3.0, 10).unwrap();
        assert_eq!(chosen, vec![0, 2]);
    }

    #[test]
    fn rate_one_returns_whole_cluster() {
        let traces: Vec<_> = (0..4).map(|i| const_trace(i as f64, 4)).collect();
        let chosen = select_dissimilar(&traces, 1.0, 10).unwrap();
        assert_eq!(chosen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn duplicates_with_outlier_keep_outlier() {
        let traces = vec![const_trace(0.0, 6), const_trace(0.0, 6), const_trace(50.0, 6)];
        let chosen = select_dissimilar(&traces, 0.5, 10).unwrap();
        assert_eq!(chosen.len(), 2);
        assert!(chosen.contains(&2), "outlier must be selected: {chosen:?}");
    }

    #[test]
    fn exact_selection_matches_exhaustive_oracle() {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(3..=8usize);
            let traces: Vec<_> = (0..n)
                .map(|_| const_trace(rng.random::<f64>() * 100.0, 4))
                .collect();
            let rate = 0.5;
            let chosen = select_dissimilar(&traces, rate, 10).unwrap();
            let target = ((rate * n as f64).ceil() as usize).clamp(1, n);
            assert_eq!(chosen.len(), target);
            if target >= 2 {
                let mut dmat = vec![vec![0.0; n]; n];
                for i in 0..n {
                    for j in 0..n {
                        dmat[i][j] = trace_distance(&traces[i], &traces[j], 10).unwrap();
                    }
                }
                let ours = subset_min_dist(&dmat, &chosen);
                // Exhaustive best value.
                let mut combo: Vec<usize> = (0..target).collect();
                let mut best = subset_min_dist(&dmat, &combo);
                while next_combination(&mut combo, n) {
                    let v = subset_min_dist(&dmat, &combo);
                    if v > best {
                        best = v;
                    }
                }
                assert!(
                    (ours - best).abs() <= 1e-12,
                    "exact selection {ours} vs oracle {best}"
                );
            }
        }
    }

    #[test]
    fn refine_rate_one_keeps_everything() {
        let traces: Vec<_> = (0..6).map(|i| const_trace(i as f64 * 5.0, 4)).collect();
        let params = RefineParams {
            k: 2,
            rate: 1.0,
            resample_points: 10,
            seed: 3,
        };
        let refined = refine_training_data(&traces, &params).unwrap();
        assert_eq!(refined.selected.len(), traces.len());
    }

    #[test]
    fn refine_keeps_distinct_trace_in_own_cluster() {
        let mut traces: Vec<_> = (0..20).map(|_| const_trace(0.0, 6)).collect();
        traces.push(const_trace(500.0, 6));
        let params = RefineParams {
            k: 2,
            rate: 0.5,
            resample_points: 10,
            seed: 9,
        };
        let refined = refine_training_data(&traces, &params).unwrap();
        let has_distinct = refined
            .selected
            .iter()
            .any(|t| t.states()[0].values()[0] == 500.0);
        assert!(has_distinct);
    }

    #[test]
    fn refine_selected_count_matches_per_cluster_ceil() {
        let traces: Vec<_> = (0..9).map(|i| const_trace(i as f64 * 3.0, 4)).collect();
        let params = RefineParams {
            k: 3,
            rate: 0.5,
            resample_points: 10,
            seed: 5,
        };
        let refined = refine_training_data(&traces, &params).unwrap();
        let clusters = kmeans_traces(&traces, 3, 5, 10).unwrap();
        let expected: usize = clusters
            .iter()
            .map(|c| ((0.5 * c.len() as f64).ceil() as usize).clamp(1, c.len()))
            .sum();
        assert_eq!(refined.selected.len(), expected);
    }

    #[test]
    fn refine_output_is_subset_of_input() {
        let traces: Vec<_> = (0..10).map(|i| ramp_trace(i as f64 * 0.2 - 1.0, 6)).collect();
        let params = RefineParams {
            k: 3,
            rate: 0.4,
            resample_points: 10,
            seed: 1,
        };
        let refined = refine_training_data(&traces, &params).unwrap();
        for sel in &refined.selected {
            assert!(traces.iter().any(|t| t == sel), "selected trace not in input");
        }
    }

    #[test]
    fn refine_deterministic_under_seed() {
        let traces: Vec<_> = (0..12).map(|i| ramp_trace((i % 4) as f64, 6)).collect();
        let params = RefineParams {
            k: 3,
            rate: 0.5,
            resample_points: 10,
            seed: 42,
        };
        let a = refine_training_data(&traces, &params).unwrap();
        let b = refine_training_data(&traces, &params).unwrap();
        assert_eq!(a.selected, b.selected);
        assert_eq!(a.clusters, b.clusters);
        assert_eq!(a.assignments, b.assignments);
    }

    #[test]
    fn maxmin_selection_beats_random_subsets_on_average() {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(77);
        let traces: Vec<_> = (0..10)
            .map(|_| const_trace(rng.random::<f64>() * 100.0, 4))
            .collect();
        let n = traces.len();
        let chosen = select_dissimilar(&traces, 0.4, 10).unwrap();
        let mut dmat = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                dmat[i][j] = trace_distance(&traces[i], &traces[j], 10).unwrap();
            }
        }
        let ours = subset_min_dist(&dmat, &chosen);
        let mut random_avg = 0.0;
        for _ in 0..100 {
            let mut idx: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                idx.swap(i, j);
            }
            random_avg += subset_min_dist(&dmat, &idx[..chosen.len()]);
        }
        random_avg /= 100.0;
        assert!(
            ours >= random_avg,
            "max-min selection {ours} below random average {random_avg}"
        );
    }
}
