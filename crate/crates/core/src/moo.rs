//! Objective-space core: Pareto dominance, nondominated fronts, exact
//! hypervolume, hypervolume improvement, and the evaluation archive.
//!
//! All objective vectors here are in canonical minimization orientation;
//! raw objectives that are maximized get negated when a record is created.
//! Hypervolume is exact for 2 to 4 objectives: a sweep for two, and for
//! three or four either inclusion-exclusion over the nondominated front
//! (small fronts, matching the definition term by term) or an equivalent
//! sweep over objective slabs (larger fronts, where inclusion-exclusion is
//! exponential). The two routes are property-tested against each other.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merge::MergeConfig;

/// Objective vectors are plain `Vec<f64>` in minimization orientation.
pub type ObjectiveVector = Vec<f64>;

/// Front size up to which 3- and 4-objective hypervolume uses
/// inclusion-exclusion; beyond it the slab sweep takes over.
const INCLUSION_EXCLUSION_MAX: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Maximize,
    Minimize,
}

/// A named objective with its native orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub name: String,
    pub orientation: Orientation,
}

impl Objective {
    pub fn maximize(name: &str) -> Self {
        Self { name: name.into(), orientation: Orientation::Maximize }
    }

    pub fn minimize(name: &str) -> Self {
        Self { name: name.into(), orientation: Orientation::Minimize }
    }
}

/// Maps raw objective values to canonical minimization orientation.
pub fn canonicalize(raw: &[f64], spec: &[Objective]) -> Result<Vec<f64>> {
    if raw.len() != spec.len() {
        return Err(Error::Argument(format!(
            "{} raw values vs {} objectives",
            raw.len(),
            spec.len()
        )));
    }
    Ok(raw
        .iter()
        .zip(spec)
        .map(|(v, o)| match o.orientation {
            Orientation::Maximize => -*v,
            Orientation::Minimize => *v,
        })
        .collect())
}

/// One evaluated configuration: the unit of optimizer history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub id: u64,
    pub iteration: u32,
    pub config: MergeConfig,
    /// Objective values in native orientation.
    pub raw: Vec<f64>,
    /// Orientation-mapped values (maximized objectives negated).
    pub canonical: Vec<f64>,
    pub seed: u64,
}

/// True iff `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!(
            "dominance between lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(dominates_unchecked(a, b))
}

fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

/// Indices of the nondominated records, in ascending id order.
pub fn pareto_front(records: &[EvaluationRecord]) -> Result<Vec<usize>> {
    if records.is_empty() {
        return Err(Error::Argument("pareto_front of empty record set".into()));
    }
    let points: Vec<&[f64]> = records.iter().map(|r| r.canonical.as_slice()).collect();
    let mut front = nondominated_indices(&points);
    front.sort_unstable_by_key(|&i| records[i].id);
    Ok(front)
}

/// Nondominated subset of a point set. Duplicate vectors keep only the first
/// occurrence.
fn nondominated_indices(points: &[&[f64]]) -> Vec<usize> {
    let mut keep = Vec::new();
    'outer: for (i, p) in points.iter().enumerate() {
        for (j, q) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            if dominates_unchecked(q, p) || (q == p && j < i) {
                continue 'outer;
            }
        }
        keep.push(i);
    }
    keep
}

/// Exact hypervolume of the region dominated by `points` and bounded by
/// `ref_point` (Lebesgue measure of the union of boxes `[p, ref]`). Points
/// not coordinate-wise `<= ref` contribute nothing and are filtered out.
/// Supported dimensions: 2, 3, 4.
pub fn hypervolume(points: &[Vec<f64>], ref_point: &[f64]) -> Result<f64> {
    let m = ref_point.len();
    if !(2..=4).contains(&m) {
        return Err(Error::Argument(format!(
            "hypervolume supports 2 to 4 objectives, got {m}"
        )));
    }
    for p in points {
        if p.len() != m {
            return Err(Error::Argument(format!(
                "point of length {} vs reference of length {m}",
                p.len()
            )));
        }
    }
    let front = reduced_front(points, ref_point);
    Ok(hv_dispatch(&front, ref_point))
}

/// Filters to points `<= ref`, drops duplicates and dominated points.
fn reduced_front(points: &[Vec<f64>], r: &[f64]) -> Vec<Vec<f64>> {
    let feasible: Vec<&[f64]> = points
        .iter()
        .filter(|p| p.iter().zip(r).all(|(v, rv)| v <= rv))
        .map(|p| p.as_slice())
        .collect();
    nondominated_indices(&feasible)
        .into_iter()
        .map(|i| feasible[i].to_vec())
        .collect()
}

fn hv_dispatch(front: &[Vec<f64>], r: &[f64]) -> f64 {
    if front.is_empty() {
        return 0.0;
    }
    match r.len() {
        2 => {
            let mut pts: Vec<(f64, f64)> = front.iter().map(|p| (p[0], p[1])).collect();
            hv2_sweep_sorted(sort2(&mut pts), r[0], r[1])
        }
        3 | 4 if front.len() <= INCLUSION_EXCLUSION_MAX => hv_inclusion_exclusion(front, r),
        3 => {
            let mut stair = Staircase2D::new();
            let mut pts: Vec<[f64; 3]> = front.iter().map(|p| [p[0], p[1], p[2]]).collect();
            pts.sort_unstable_by(|a, b| a[2].partial_cmp(&b[2]).expect("finite"));
            hv3_sweep_sorted(&pts, r, &mut stair)
        }
        4 => hv4_slabs(front, r),
        _ => unreachable!("dimension validated"),
    }
}

fn sort2(pts: &mut [(f64, f64)]) -> &[(f64, f64)] {
    pts.sort_unstable_by(|a, b| {
        a.0.partial_cmp(&b.0).expect("finite").then(a.1.partial_cmp(&b.1).expect("finite"))
    });
    pts
}

/// 2D sweep over points sorted by the first coordinate ascending.
fn hv2_sweep_sorted(pts: &[(f64, f64)], rx: f64, ry: f64) -> f64 {
    let mut area = 0.0;
    let mut level = ry;
    for &(x, y) in pts {
        if y < level {
            area += (rx - x) * (level - y);
            level = y;
        }
    }
    area
}

/// Inclusion-exclusion over the nondominated front, directly mirroring the
/// measure of a union of boxes. Exponential in front size, so only used for
/// small fronts.
fn hv_inclusion_exclusion(front: &[Vec<f64>], r: &[f64]) -> f64 {
    let n = front.len();
    debug_assert!(n <= 24);
    let m = r.len();
    let mut total = 0.0;
    for mask in 1u32..(1u32 << n) {
        let mut vol = 1.0;
        for j in 0..m {
            let mut hi = f64::NEG_INFINITY;
            for (i, p) in front.iter().enumerate() {
                if mask & (1 << i) != 0 && p[j] > hi {
                    hi = p[j];
                }
            }
            vol *= r[j] - hi;
        }
        if mask.count_ones() % 2 == 1 {
            total += vol;
        } else {
            total -= vol;
        }
    }
    total
}

/// Incremental 2D staircase of mutually nondominated points with its
/// dominated area. Points only ever get inserted, which is exactly the
/// access pattern of the 3D slab sweep.
pub(crate) struct Staircase2D {
    xs: Vec<f64>,
    ys: Vec<f64>,
    rx: f64,
    ry: f64,
    area: f64,
}

impl Staircase2D {
    pub(crate) fn new() -> Self {
        Self { xs: Vec::new(), ys: Vec::new(), rx: 0.0, ry: 0.0, area: 0.0 }
    }

    pub(crate) fn reset(&mut self, rx: f64, ry: f64) {
        self.xs.clear();
        self.ys.clear();
        self.rx = rx;
        self.ry = ry;
        self.area = 0.0;
    }

    pub(crate) fn area(&self) -> f64 {
        self.area
    }

    pub(crate) fn insert(&mut self, x: f64, y: f64) {
        if x >= self.rx || y >= self.ry {
            return;
        }
        let i0 = self.xs.partition_point(|&v| v < x);
        if i0 > 0 && self.ys[i0 - 1] <= y {
            return; // dominated by a predecessor
        }
        if i0 < self.xs.len() && self.xs[i0] == x && self.ys[i0] <= y {
            return; // dominated by an equal-x point
        }
        // Successors with worse y are dominated by the new point.
        let mut j = i0;
        while j < self.xs.len() && self.ys[j] >= y {
            j += 1;
        }
        let left_level = if i0 == 0 { self.ry } else { self.ys[i0 - 1] };
        let bound = |k: usize, xs: &[f64], rx: f64| if k < xs.len() { xs[k] } else { rx };
        let mut gain = (bound(i0, &self.xs, self.rx) - x) * (left_level - y);
        for k in i0..j {
            gain += (bound(k + 1, &self.xs, self.rx) - self.xs[k]) * (self.ys[k] - y);
        }
        self.xs.drain(i0..j);
        self.ys.drain(i0..j);
        self.xs.insert(i0, x);
        self.ys.insert(i0, y);
        self.area += gain;
    }
}

/// 3D hypervolume by sweeping slabs along the third coordinate while the 2D
/// staircase accumulates the first two. `pts` must be pre-filtered `<= r`
/// and sorted ascending by the third coordinate.
fn hv3_sweep_sorted(pts: &[[f64; 3]], r: &[f64], stair: &mut Staircase2D) -> f64 {
    stair.reset(r[0], r[1]);
    let mut vol = 0.0;
    for (i, p) in pts.iter().enumerate() {
        stair.insert(p[0], p[1]);
        let z_next = if i + 1 < pts.len() { pts[i + 1][2] } else { r[2] };
        vol += stair.area() * (z_next - p[2]);
    }
    vol
}

/// 4D hypervolume: slabs along the fourth coordinate, 3D sweep per slab.
fn hv4_slabs(front: &[Vec<f64>], r: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..front.len()).collect();
    order.sort_unstable_by(|&a, &b| front[a][3].partial_cmp(&front[b][3]).expect("finite"));
    let mut stair = Staircase2D::new();
    let mut active: Vec<[f64; 3]> = Vec::with_capacity(front.len());
    let mut vol = 0.0;
    for (k, &i) in order.iter().enumerate() {
        let p = &front[i];
        active.push([p[0], p[1], p[2]]);
        let w_next = if k + 1 < order.len() { front[order[k + 1]][3] } else { r[3] };
        if w_next > p[3] {
            let mut sorted = active.clone();
            sorted.sort_unstable_by(|a, b| a[2].partial_cmp(&b[2]).expect("finite"));
            vol += hv3_sweep_sorted(&sorted, r, &mut stair) * (w_next - p[3]);
        }
    }
    vol
}

/// Hypervolume improvement: `HV(front ∪ new_points) - HV(front)`, never
/// negative.
pub fn hvi(new_points: &[Vec<f64>], front: &[Vec<f64>], ref_point: &[f64]) -> Result<f64> {
    let base = hypervolume(front, ref_point)?;
    let mut combined = front.to_vec();
    combined.extend_from_slice(new_points);
    let with_new = hypervolume(&combined, ref_point)?;
    Ok((with_new - base).max(0.0))
}

/// Reusable hypervolume-improvement evaluator for one fixed front, built for
/// the Monte-Carlo acquisition loop: preprocessing happens once, then each
/// sampled batch is scored without allocation.
pub(crate) struct HviContext {
    m: usize,
    r: Vec<f64>,
    /// Filtered nondominated front; sorted by first coordinate when m == 2,
    /// by last coordinate otherwise.
    front: Vec<Vec<f64>>,
    hv_front: f64,
    stair: Staircase2D,
    scratch2: Vec<(f64, f64)>,
    scratch3: Vec<[f64; 3]>,
    scratch4: Vec<Vec<f64>>,
}

impl HviContext {
    pub(crate) fn new(front_points: &[Vec<f64>], ref_point: &[f64]) -> Result<Self> {
        let hv_front = hypervolume(front_points, ref_point)?;
        let mut front = reduced_front(front_points, ref_point);
        let m = ref_point.len();
        if m == 2 {
            front.sort_unstable_by(|a, b| a[0].partial_cmp(&b[0]).expect("finite"));
        } else {
            front.sort_unstable_by(|a, b| a[m - 1].partial_cmp(&b[m - 1]).expect("finite"));
        }
        Ok(Self {
            m,
            r: ref_point.to_vec(),
            front,
            hv_front,
            stair: Staircase2D::new(),
            scratch2: Vec::new(),
            scratch3: Vec::new(),
            scratch4: Vec::new(),
        })
    }

    /// HVI of `q` points laid out as a flat row-major `q x m` slice.
    pub(crate) fn hvi_flat(&mut self, pts: &[f64]) -> f64 {
        debug_assert_eq!(pts.len() % self.m, 0);
        let union = match self.m {
            2 => self.union_hv2(pts),
            3 => self.union_hv3(pts),
            _ => self.union_hv4(pts),
        };
        (union - self.hv_front).max(0.0)
    }

    fn feasible(&self, p: &[f64]) -> bool {
        p.iter().zip(&self.r).all(|(v, r)| v <= r)
    }

    fn union_hv2(&mut self, pts: &[f64]) -> f64 {
        self.scratch2.clear();
        for p in pts.chunks_exact(2) {
            if self.feasible(p) {
                self.scratch2.push((p[0], p[1]));
            }
        }
        self.scratch2
            .sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        // Merged sweep over the presorted front and the sorted new points.
        let (rx, ry) = (self.r[0], self.r[1]);
        let mut area = 0.0;
        let mut level = ry;
        let (mut i, mut j) = (0, 0);
        while i < self.front.len() || j < self.scratch2.len() {
            let take_front = j >= self.scratch2.len()
                || (i < self.front.len() && self.front[i][0] <= self.scratch2[j].0);
            let (x, y) = if take_front {
                let p = &self.front[i];
                i += 1;
                (p[0], p[1])
            } else {
                let p = self.scratch2[j];
                j += 1;
                p
            };
            if y < level {
                area += (rx - x) * (level - y);
                level = y;
            }
        }
        area
    }

    fn union_hv3(&mut self, pts: &[f64]) -> f64 {
        self.scratch3.clear();
        for p in pts.chunks_exact(3) {
            if self.feasible(p) {
                self.scratch3.push([p[0], p[1], p[2]]);
            }
        }
        self.scratch3
            .sort_unstable_by(|a, b| a[2].partial_cmp(&b[2]).expect("finite"));
        let r = &self.r;
        self.stair.reset(r[0], r[1]);
        let mut vol = 0.0;
        let (mut i, mut j) = (0, 0);
        let (nf, ns) = (self.front.len(), self.scratch3.len());
        let mut prev_z: Option<f64> = None;
        while i < nf || j < ns {
            let take_front = j >= ns || (i < nf && self.front[i][2] <= self.scratch3[j][2]);
            let (x, y, z) = if take_front {
                let p = &self.front[i];
                i += 1;
                (p[0], p[1], p[2])
            } else {
                let p = self.scratch3[j];
                j += 1;
                (p[0], p[1], p[2])
            };
            if let Some(pz) = prev_z {
                vol += self.stair.area() * (z - pz);
            }
            self.stair.insert(x, y);
            prev_z = Some(z);
        }
        if let Some(pz) = prev_z {
            vol += self.stair.area() * (r[2] - pz);
        }
        vol
    }

    fn union_hv4(&mut self, pts: &[f64]) -> f64 {
        self.scratch4.clear();
        self.scratch4.extend(self.front.iter().cloned());
        for p in pts.chunks_exact(4) {
            if self.feasible(p) {
                self.scratch4.push(p.to_vec());
            }
        }
        let reduced = {
            let refs: Vec<&[f64]> = self.scratch4.iter().map(|p| p.as_slice()).collect();
            nondominated_indices(&refs)
                .into_iter()
                .map(|i| self.scratch4[i].clone())
                .collect::<Vec<_>>()
        };
        hv4_slabs(&reduced, &self.r)
    }
}

/// Reference point rule: per coordinate `nadir + 0.1 * max(range, 1e-6)`,
/// computed over canonical objective vectors. Strictly worse than every
/// observed point, and never improves as records accumulate (nadir and range
/// are both nondecreasing under insertion).
pub fn reference_point(records: &[EvaluationRecord]) -> Result<Vec<f64>> {
    let points: Vec<&[f64]> = records.iter().map(|r| r.canonical.as_slice()).collect();
    reference_point_for(&points)
}

/// The same rule over plain canonical points.
pub fn reference_point_for(points: &[&[f64]]) -> Result<Vec<f64>> {
    let first = points
        .first()
        .ok_or_else(|| Error::Argument("reference point of empty set".into()))?;
    let m = first.len();
    let mut nadir = alloc::vec![f64::NEG_INFINITY; m];
    let mut ideal = alloc::vec![f64::INFINITY; m];
    for p in points {
        if p.len() != m {
            return Err(Error::Argument("inconsistent objective lengths".into()));
        }
        for j in 0..m {
            nadir[j] = nadir[j].max(p[j]);
            ideal[j] = ideal[j].min(p[j]);
        }
    }
    Ok((0..m)
        .map(|j| nadir[j] + 0.1 * (nadir[j] - ideal[j]).max(1e-6))
        .collect())
}

/// The evaluated set with its nondominated front, reference point, and
/// hypervolume bookkeeping. Mutation is confined to the engine's
/// single-threaded update phase.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoArchive {
    records: Vec<EvaluationRecord>,
    front: Vec<usize>,
    ref_point: Vec<f64>,
}

impl ParetoArchive {
    pub fn from_records(records: Vec<EvaluationRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Argument("archive needs at least one record".into()));
        }
        let mut archive = Self { records, front: Vec::new(), ref_point: Vec::new() };
        archive.recompute()?;
        Ok(archive)
    }

    /// Appends a batch and refreshes the front and reference point. The
    /// reference point is clamped to never improve within a run.
    pub fn push_batch(&mut self, batch: Vec<EvaluationRecord>) -> Result<()> {
        self.records.extend(batch);
        let old_ref = core::mem::take(&mut self.ref_point);
        self.recompute()?;
        if old_ref.len() == self.ref_point.len() {
            for (new, old) in self.ref_point.iter_mut().zip(&old_ref) {
                *new = new.max(*old);
            }
        }
        Ok(())
    }

    fn recompute(&mut self) -> Result<()> {
        for r in &self.records {
            if r.canonical.iter().any(|v| !v.is_finite()) || r.raw.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "record {} has non-finite objective values",
                    r.id
                )));
            }
        }
        self.front = pareto_front(&self.records)?;
        self.ref_point = reference_point(&self.records)?;
        Ok(())
    }

    pub fn records(&self) -> &[EvaluationRecord] {
        &self.records
    }

    pub fn front_indices(&self) -> &[usize] {
        &self.front
    }

    pub fn front_records(&self) -> impl Iterator<Item = &EvaluationRecord> {
        self.front.iter().map(|&i| &self.records[i])
    }

    pub fn front_points(&self) -> Vec<Vec<f64>> {
        self.front.iter().map(|&i| self.records[i].canonical.clone()).collect()
    }

    pub fn ref_point(&self) -> &[f64] {
        &self.ref_point
    }

    /// Hypervolume of the current front under the archive reference point.
    pub fn hypervolume(&self) -> Result<f64> {
        hypervolume(&self.front_points(), &self.ref_point)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, canonical: Vec<f64>) -> EvaluationRecord {
        EvaluationRecord {
            id,
            iteration: 0,
            config: MergeConfig::new(alloc::vec![0.5], alloc::vec![0.5]).unwrap(),
            raw: canonical.clone(),
            canonical,
            seed: 0,
        }
    }

    #[test]
    fn dominance_definition_cases() {
        assert!(dominates(&[1.0, 2.0], &[2.0, 2.0]).unwrap());
        assert!(!dominates(&[1.0, 2.0], &[1.0, 2.0]).unwrap());
        assert!(!dominates(&[1.0, 3.0], &[2.0, 2.0]).unwrap());
        assert!(dominates(&[1.0], &[2.0, 2.0]).is_err());
    }

    #[test]
    fn front_of_single_record_is_itself() {
        let records = alloc::vec![rec(0, alloc::vec![1.0, 1.0])];
        assert_eq!(pareto_front(&records).unwrap(), alloc::vec![0]);
    }

    #[test]
    fn front_drops_dominated() {
        let records = alloc::vec![
            rec(0, alloc::vec![1.0, 2.0]),
            rec(1, alloc::vec![2.0, 1.0]),
            rec(2, alloc::vec![2.0, 2.0]),
        ];
        assert_eq!(pareto_front(&records).unwrap(), alloc::vec![0, 1]);
    }

    #[test]
    fn front_matches_brute_force_on_random_sets() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let n = rng.random_range(1..=64);
            let m = rng.random_range(2..=4);
            let records: Vec<EvaluationRecord> = (0..n)
                .map(|i| rec(i as u64, (0..m).map(|_| rng.random::<f64>()).collect()))
                .collect();
            let got = pareto_front(&records).unwrap();
            // Independent brute force straight from the definition.
            let mut expected = Vec::new();
            for i in 0..records.len() {
                let mut dominated = false;
                for j in 0..records.len() {
                    if i != j && dominates(&records[j].canonical, &records[i].canonical).unwrap() {
                        dominated = true;
                        break;
                    }
                }
                if !dominated {
                    expected.push(i);
                }
            }
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn front_is_idempotent() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let records: Vec<EvaluationRecord> = (0..32)
            .map(|i| rec(i as u64, alloc::vec![rng.random(), rng.random()]))
            .collect();
        let front = pareto_front(&records).unwrap();
        let front_records: Vec<EvaluationRecord> =
            front.iter().map(|&i| records[i].clone()).collect();
        let again = pareto_front(&front_records).unwrap();
        assert_eq!(again.len(), front_records.len());
    }

    #[test]
    fn hv_unit_box() {
        let hv = hypervolume(&[alloc::vec![0.0, 0.0]], &[1.0, 1.0]).unwrap();
        assert!((hv - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hv_two_point_front() {
        // Two quarter-overlapping boxes: 0.25*0.75 + 0.75*0.25 - 0.25*0.25.
        let pts = alloc::vec![alloc::vec![0.25, 0.75], alloc::vec![0.75, 0.25]];
        let hv = hypervolume(&pts, &[1.0, 1.0]).unwrap();
        assert!((hv - 0.3125).abs() < 1e-12);
    }

    #[test]
    fn hv_empty_set_is_zero() {
        assert_eq!(hypervolume(&[], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn hv_filters_points_beyond_reference() {
        let pts = alloc::vec![alloc::vec![0.5, 0.5], alloc::vec![2.0, 0.0]];
        let hv = hypervolume(&pts, &[1.0, 1.0]).unwrap();
        assert!((hv - 0.25).abs() < 1e-12);
    }

    #[test]
    fn hv_dimension_mismatch_is_an_error() {
        assert!(hypervolume(&[alloc::vec![0.0, 0.0, 0.0]], &[1.0, 1.0]).is_err());
        assert!(hypervolume(&[], &[1.0]).is_err());
    }

    #[test]
    fn hv_routes_agree_in_3d() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let r = alloc::vec![1.0, 1.0, 1.0];
        for _ in 0..30 {
            let n = rng.random_range(1..=14);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
                .collect();
            let front = reduced_front(&pts, &r);
            let a = hv_inclusion_exclusion(&front, &r);
            let mut stair = Staircase2D::new();
            let mut sorted: Vec<[f64; 3]> = front.iter().map(|p| [p[0], p[1], p[2]]).collect();
            sorted.sort_unstable_by(|x, y| x[2].partial_cmp(&y[2]).unwrap());
            let b = hv3_sweep_sorted(&sorted, &r, &mut stair);
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn hv_routes_agree_in_4d() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let r = alloc::vec![1.0; 4];
        for _ in 0..15 {
            let n = rng.random_range(1..=10);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
                .collect();
            let front = reduced_front(&pts, &r);
            let a = hv_inclusion_exclusion(&front, &r);
            let b = hv4_slabs(&front, &r);
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn hv_is_monotone_under_insertion() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for m in [2usize, 3] {
            let r = alloc::vec![1.0; m];
            let mut pts: Vec<Vec<f64>> = Vec::new();
            let mut last = 0.0;
            for _ in 0..25 {
                pts.push((0..m).map(|_| rng.random::<f64>()).collect());
                let hv = hypervolume(&pts, &r).unwrap();
                assert!(hv >= last - 1e-12);
                last = hv;
            }
        }
    }

    #[test]
    fn hvi_of_dominated_point_is_zero() {
        let front = alloc::vec![alloc::vec![1.0, 1.0]];
        let hvi_v = hvi(&[alloc::vec![1.5, 1.5]], &front, &[2.0, 2.0]).unwrap();
        assert_eq!(hvi_v, 0.0);
    }

    #[test]
    fn hvi_matches_two_hypervolume_evaluations() {
        let front = alloc::vec![alloc::vec![1.0, 1.0]];
        let improvement = hvi(&[alloc::vec![0.5, 0.5]], &front, &[2.0, 2.0]).unwrap();
        assert!((improvement - 1.25).abs() < 1e-12);
    }

    #[test]
    fn hvi_of_duplicate_front_point_is_zero() {
        let front = alloc::vec![alloc::vec![1.0, 1.0]];
        let v = hvi(&[alloc::vec![1.0, 1.0]], &front, &[2.0, 2.0]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn hvi_context_matches_public_hvi() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for m in [2usize, 3, 4] {
            let r = alloc::vec![1.2; m];
            let front: Vec<Vec<f64>> = (0..8)
                .map(|_| (0..m).map(|_| rng.random::<f64>()).collect())
                .collect();
            let mut ctx = HviContext::new(&front, &r).unwrap();
            for _ in 0..20 {
                let q = rng.random_range(1..=4);
                let new: Vec<Vec<f64>> = (0..q)
                    .map(|_| (0..m).map(|_| rng.random::<f64>() * 1.3).collect())
                    .collect();
                let flat: Vec<f64> = new.iter().flatten().copied().collect();
                let fast = ctx.hvi_flat(&flat);
                let slow = hvi(&new, &front, &r).unwrap();
                assert!((fast - slow).abs() < 1e-10, "m={m}: {fast} vs {slow}");
            }
        }
    }

    #[test]
    fn reference_point_degenerate_range_uses_epsilon_floor() {
        let records = alloc::vec![rec(0, alloc::vec![0.0, 0.0])];
        let r = reference_point(&records).unwrap();
        assert_eq!(r, alloc::vec![1e-7, 1e-7]);
    }

    #[test]
    fn reference_point_adds_ten_percent_margin() {
        let records = alloc::vec![rec(0, alloc::vec![0.0, 0.0]), rec(1, alloc::vec![1.0, 2.0])];
        let r = reference_point(&records).unwrap();
        assert!((r[0] - 1.1).abs() < 1e-12);
        assert!((r[1] - 2.2).abs() < 1e-12);
    }

    #[test]
    fn reference_point_never_improves_as_records_accumulate() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut records = alloc::vec![rec(0, alloc::vec![rng.random(), rng.random()])];
        let mut prev = reference_point(&records).unwrap();
        for i in 1..40 {
            records.push(rec(i, alloc::vec![rng.random(), rng.random()]));
            let next = reference_point(&records).unwrap();
            for (n, p) in next.iter().zip(&prev) {
                assert!(n >= p);
            }
            prev = next;
        }
    }

    #[test]
    fn archive_front_and_ref_point_stay_consistent() {
        let mut archive = ParetoArchive::from_records(alloc::vec![
            rec(0, alloc::vec![1.0, 2.0]),
            rec(1, alloc::vec![2.0, 1.0]),
        ])
        .unwrap();
        assert_eq!(archive.front_indices(), &[0, 1]);
        archive
            .push_batch(alloc::vec![rec(2, alloc::vec![0.5, 0.5])])
            .unwrap();
        assert_eq!(archive.front_indices(), &[2]);
        // Every front member strictly better than the reference point.
        for r in archive.front_records() {
            for (v, rv) in r.canonical.iter().zip(archive.ref_point()) {
                assert!(v < rv);
            }
        }
    }
}
