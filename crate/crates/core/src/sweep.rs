//! Parameter-space sweeps: the `(α, α₀)` region map at `w = 4α₀/3`, the
//! adiabatic derivative curves over `k = B/B₀`, and bisection of
//! classification boundaries (including `k_cr`).

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{build_g, build_lambda, BindingPotential, SystemParams};
use crate::phases::{cos_theta, mode_derivative};
use crate::spectral::{
    classify, eigenvalues, mode_for, slots, track_modes, Classification, KreinSign, ModeSpectrum,
    Tolerances,
};

/// Confined-component count the default window is expected to contain.
pub const EXPECTED_COMPONENTS: usize = 4;
/// Upper limit of the auto-extended window.
pub const MAX_WINDOW: f64 = 10.0;
/// Samples used to detect multiple crossings before bisecting.
pub const PRESAMPLES: usize = 33;
/// Bracket used by [`find_kcr`].
pub const KCR_BRACKET: (f64, f64) = (0.01, 1.0);
const KCR_SCAN_POINTS: usize = 100;

/// Inclusive uniform grid of `steps` samples on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn new(min: f64, max: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Domain("grid needs a positive step count".into()));
        }
        if !(min.is_finite() && max.is_finite()) || max < min || (steps > 1 && max == min) {
            return Err(Error::Domain(format!("invalid grid range [{min}, {max}]")));
        }
        Ok(Self { min, max, steps })
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.steps == 1 {
            self.min
        } else if i + 1 == self.steps {
            self.max
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.steps).map(|i| self.value(i)).collect()
    }
}

/// Classification of a single `(α, α₀)` cell at `ω = 1`, `w = 4α₀/3`.
pub fn classify_cell(alpha: f64, alpha0: f64) -> (Classification, Option<[KreinSign; 3]>) {
    let Ok(params) = SystemParams::penning_loop(alpha, alpha0, 1.0) else {
        return (Classification::Boundary, None);
    };
    match classify(&build_lambda(&build_g(
        &params,
        &BindingPotential::PenningQuadrupole,
    ))) {
        Ok(s) => (s.classification, s.signature()),
        Err(_) => (Classification::Boundary, None),
    }
}

/// Labelled grid over `(α, α₀)`. Cells are stored α₀-major: index
/// `j·nα + i` for `α = alpha.value(i)`, `α₀ = alpha0.value(j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    pub alpha: GridSpec,
    pub alpha0: GridSpec,
    pub classes: Vec<Classification>,
    /// Krein signs by descending frequency for confined cells.
    pub signatures: Vec<Option<[KreinSign; 3]>>,
    /// Component id for confined cells, `-1` elsewhere.
    pub components: Vec<i32>,
    pub component_count: usize,
    pub unconfined_regions: usize,
    /// Number of 50% window extensions applied by [`sweep_fig1_auto`].
    pub extensions: usize,
}

impl RegionMap {
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.alpha.steps + i
    }

    pub fn class_at(&self, i: usize, j: usize) -> Classification {
        self.classes[self.index(i, j)]
    }

    pub fn component_at(&self, i: usize, j: usize) -> i32 {
        self.components[self.index(i, j)]
    }

    /// `(α, α₀, class, component)` rows in storage order.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, Classification, i32)> + '_ {
        (0..self.classes.len()).map(move |idx| {
            let (i, j) = (idx % self.alpha.steps, idx / self.alpha.steps);
            (
                self.alpha.value(i),
                self.alpha0.value(j),
                self.classes[idx],
                self.components[idx],
            )
        })
    }

    pub fn count(&self, class: Classification) -> usize {
        self.classes.iter().filter(|c| **c == class).count()
    }
}

/// Classifies every cell and labels the confined components.
///
/// Two 4-adjacent confined cells join only if their Krein signatures agree.
/// Along any confined path the signature is constant, so a jump between
/// neighbours certifies an instability band narrower than the grid step
/// (the tongues emanating from `α = 0` have width `O(α²)`).
pub fn sweep_fig1(alpha: GridSpec, alpha0: GridSpec) -> RegionMap {
    let (na, nb) = (alpha.steps, alpha0.steps);
    let cells: Vec<_> = (0..na * nb)
        .into_par_iter()
        .map(|idx| classify_cell(alpha.value(idx % na), alpha0.value(idx / na)))
        .collect();
    let (classes, signatures): (Vec<_>, Vec<_>) = cells.into_iter().unzip();
    let mut map = RegionMap {
        alpha,
        alpha0,
        classes,
        signatures,
        components: Vec::new(),
        component_count: 0,
        unconfined_regions: 0,
        extensions: 0,
    };
    label_components(&mut map);
    map.unconfined_regions = count_unconfined_regions(&map);
    map
}

/// [`sweep_fig1`], widening both windows by 50% of the original extent (up
/// to [`MAX_WINDOW`]) while fewer than four confined components are found.
pub fn sweep_fig1_auto(alpha: GridSpec, alpha0: GridSpec) -> RegionMap {
    let mut map = sweep_fig1(alpha, alpha0);
    let (da, db) = (
        0.5 * (alpha.max - alpha.min),
        0.5 * (alpha0.max - alpha0.min),
    );
    let mut extensions = 0;
    while map.component_count < EXPECTED_COMPONENTS
        && (map.alpha.max < MAX_WINDOW || map.alpha0.max < MAX_WINDOW)
    {
        let grow = |g: GridSpec, d: f64| GridSpec {
            max: (g.max + d).min(MAX_WINDOW.max(g.max)),
            ..g
        };
        let (a, b) = (grow(map.alpha, da), grow(map.alpha0, db));
        if a == map.alpha && b == map.alpha0 {
            break;
        }
        extensions += 1;
        map = sweep_fig1(a, b);
    }
    map.extensions = extensions;
    map
}

fn joins(map: &RegionMap, a: usize, b: usize) -> bool {
    map.classes[a] == Classification::Confined
        && map.classes[b] == Classification::Confined
        && map.signatures[a] == map.signatures[b]
}

fn is_wall(map: &RegionMap, a: usize, b: usize) -> bool {
    map.classes[a] == Classification::Confined
        && map.classes[b] == Classification::Confined
        && map.signatures[a] != map.signatures[b]
}

fn label_components(map: &mut RegionMap) {
    let (na, nb) = (map.alpha.steps, map.alpha0.steps);
    let mut uf = UnionFind::<usize>::new(na * nb);
    for j in 0..nb {
        for i in 0..na {
            let here = map.index(i, j);
            if i + 1 < na && joins(map, here, here + 1) {
                uf.union(here, here + 1);
            }
            if j + 1 < nb && joins(map, here, here + na) {
                uf.union(here, here + na);
            }
        }
    }
    let mut ids = vec![-1i32; na * nb];
    let mut root_id = vec![-1i32; na * nb];
    let mut next = 0;
    for idx in 0..na * nb {
        if map.classes[idx] != Classification::Confined {
            continue;
        }
        let root = uf.find(idx);
        if root_id[root] < 0 {
            root_id[root] = next;
            next += 1;
        }
        ids[idx] = root_id[root];
    }
    map.components = ids;
    map.component_count = next as usize;
}

/// Unconfined regions: connected sets of non-confined cells, where two
/// such cells also connect through a corner, or through a chain of
/// signature jumps (unresolved instability bands) that meet at grid
/// corners. Only sets containing at least one Unconfined cell count.
fn count_unconfined_regions(map: &RegionMap) -> usize {
    let (na, nb) = (map.alpha.steps, map.alpha0.steps);
    let cells = na * nb;
    // walls between (i,j)-(i+1,j) come first, then (i,j)-(i,j+1)
    let h_wall = |i: usize, j: usize| cells + j * (na - 1) + i;
    let v_wall = |i: usize, j: usize| cells + (na - 1) * nb + j * na + i;
    let total = cells + (na - 1) * nb + na * (nb - 1);
    let mut uf = UnionFind::<usize>::new(total);
    let open = |idx: usize| map.classes[idx] != Classification::Confined;

    for j in 0..nb {
        for i in 0..na {
            let here = map.index(i, j);
            if i + 1 < na && open(here) && open(here + 1) {
                uf.union(here, here + 1);
            }
            if j + 1 < nb && open(here) && open(here + na) {
                uf.union(here, here + na);
            }
        }
    }
    for j in 0..nb.saturating_sub(1) {
        for i in 0..na.saturating_sub(1) {
            let quad = [
                map.index(i, j),
                map.index(i + 1, j),
                map.index(i, j + 1),
                map.index(i + 1, j + 1),
            ];
            let mut members: Vec<usize> = quad.iter().copied().filter(|&c| open(c)).collect();
            let edges = [
                (quad[0], quad[1], h_wall(i, j)),
                (quad[2], quad[3], h_wall(i, j + 1)),
                (quad[0], quad[2], v_wall(i, j)),
                (quad[1], quad[3], v_wall(i + 1, j)),
            ];
            members.extend(
                edges
                    .iter()
                    .filter(|(a, b, _)| is_wall(map, *a, *b))
                    .map(|e| e.2),
            );
            for pair in members.windows(2) {
                uf.union(pair[0], pair[1]);
            }
        }
    }
    let mut roots: Vec<usize> = (0..cells)
        .filter(|&c| map.classes[c] == Classification::Unconfined)
        .map(|c| uf.find(c))
        .collect();
    roots.sort_unstable();
    roots.dedup();
    roots.len()
}

/// Result of a bisection on a segment parameterized by `t ∈ [lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bisection {
    /// Endpoint on the side of the original `lo`.
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

impl Bisection {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Number of halvings taking a bracket of width `range` below `tol`.
pub fn bisection_iterations(range: f64, tol: f64) -> usize {
    if range <= tol {
        0
    } else {
        (range / tol).log2().ceil() as usize
    }
}

/// Bisects `[lo, hi]` for the change of `inside`, assuming `inside(lo)` and
/// `!inside(hi)`. Runs exactly [`bisection_iterations`] halvings.
pub fn bisect(lo: f64, hi: f64, tol: f64, inside: impl Fn(f64) -> bool) -> Bisection {
    let iterations = bisection_iterations(hi - lo, tol);
    let (mut a, mut b) = (lo, hi);
    for _ in 0..iterations {
        let mid = 0.5 * (a + b);
        if inside(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Bisection {
        lo: a,
        hi: b,
        iterations,
    }
}

/// Counts flips of `inside` over [`PRESAMPLES`] evenly spaced samples.
fn crossings(lo: f64, hi: f64, inside: &impl Fn(f64) -> bool) -> usize {
    let flags: Vec<bool> = (0..PRESAMPLES)
        .map(|s| inside(lo + (hi - lo) * s as f64 / (PRESAMPLES - 1) as f64))
        .collect();
    flags.windows(2).filter(|w| w[0] != w[1]).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub alpha: f64,
    pub alpha0: f64,
    /// Last sampled point still classified Confined.
    pub confined_side: (f64, f64),
    pub unconfined_side: (f64, f64),
    pub iterations: usize,
}

/// Bisects the segment from a confined to an unconfined `(α, α₀)` point
/// until the bracket is shorter than `tol` in parameter distance.
pub fn refine_boundary(
    p_confined: (f64, f64),
    p_unconfined: (f64, f64),
    tol: f64,
) -> Result<BoundaryPoint> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let (c0, _) = classify_cell(p_confined.0, p_confined.1);
    let (c1, _) = classify_cell(p_unconfined.0, p_unconfined.1);
    if c0 != Classification::Confined || c1 != Classification::Unconfined {
        return Err(Error::Precondition(format!(
            "segment endpoints classify as {c0:?} and {c1:?}; need Confined and Unconfined"
        )));
    }
    let length = (p_unconfined.0 - p_confined.0).hypot(p_unconfined.1 - p_confined.1);
    let at = |t: f64| {
        (
            p_confined.0 + t * (p_unconfined.0 - p_confined.0),
            p_confined.1 + t * (p_unconfined.1 - p_confined.1),
        )
    };
    let inside = |t: f64| {
        let (a, b) = at(t);
        classify_cell(a, b).0 == Classification::Confined
    };
    let n = crossings(0.0, 1.0, &inside);
    if n > 1 {
        return Err(Error::MultiCrossing { crossings: n });
    }
    let iterations = bisection_iterations(length, tol);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (alpha, alpha0) = at(0.5 * (lo + hi));
    Ok(BoundaryPoint {
        alpha,
        alpha0,
        confined_side: at(lo),
        unconfined_side: at(hi),
        iterations,
    })
}

fn adiabatic_confined(k: f64, binding: &BindingPotential) -> bool {
    SystemParams::adiabatic(k, 0.0)
        .and_then(|p| classify(&build_lambda(&build_g(&p, binding))))
        .map(|s| s.is_confined())
        .unwrap_or(false)
}

/// Bisection of the static (`ω = 0`) classification along `k` between a
/// confined and an unconfined ratio.
pub fn refine_adiabatic(
    k_confined: f64,
    k_unconfined: f64,
    tol: f64,
    binding: &BindingPotential,
) -> Result<Bisection> {
    let inside = |k: f64| adiabatic_confined(k, binding);
    if !inside(k_confined) || inside(k_unconfined) {
        return Err(Error::Precondition(format!(
            "need a confined k={k_confined} and an unconfined k={k_unconfined}"
        )));
    }
    if !(k_confined < k_unconfined) {
        return Err(Error::Precondition(
            "the confined end must have the smaller k".into(),
        ));
    }
    let n = crossings(k_confined, k_unconfined, &inside);
    if n > 1 {
        return Err(Error::MultiCrossing { crossings: n });
    }
    Ok(bisect(k_confined, k_unconfined, tol, inside))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KcrResult {
    pub k_cr: f64,
    pub bracket: [f64; 2],
    pub tol: f64,
    pub iterations: usize,
}

/// Smallest `k` at which the static Penning-loop spectrum (`b0 = 1`,
/// `w0 = 4/3`, `ω = 0`) stops being confined: a coarse scan of
/// [`KCR_BRACKET`] locates the first transition, which is then bisected.
pub fn find_kcr(tol: f64) -> Result<KcrResult> {
    if !(tol >= 1e-9) {
        return Err(Error::Domain(format!(
            "tol must be at least 1e-9, got {tol}"
        )));
    }
    let binding = BindingPotential::PenningQuadrupole;
    let scan = GridSpec::new(KCR_BRACKET.0, KCR_BRACKET.1, KCR_SCAN_POINTS)?;
    let ks = scan.values();
    let flags: Vec<bool> = ks
        .par_iter()
        .map(|&k| adiabatic_confined(k, &binding))
        .collect();
    if !flags[0] {
        return Err(Error::Numerical(format!("k={} is not confined", ks[0])));
    }
    let first = flags
        .iter()
        .position(|f| !f)
        .ok_or_else(|| Error::Numerical("no loss of confinement in the k bracket".into()))?;
    let b = bisect(ks[first - 1], ks[first], tol, |k| {
        adiabatic_confined(k, &binding)
    });
    Ok(KcrResult {
        k_cr: b.midpoint(),
        bracket: [b.lo, b.hi],
        tol,
        iterations: b.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub k: f64,
    pub cos_theta: f64,
    /// `∂ωᵢ/∂ω` at `ω = 0`; `None` where mode `i` is not stable.
    pub dw: [Option<f64>; 3],
    pub stable: [bool; 3],
}

impl CurveRow {
    pub fn stable23(&self) -> bool {
        self.stable[1] && self.stable[2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveTable {
    pub binding: String,
    pub rows: Vec<CurveRow>,
}

/// Default `k` grid: 500 points on `[0.01, 1]`.
pub fn default_k_grid() -> GridSpec {
    GridSpec {
        min: 0.01,
        max: 1.0,
        steps: 500,
    }
}

struct StaticPoint {
    spectrum: Option<ModeSpectrum>,
    dm: crate::model::DynamicalMatrix,
    slot_modes: [Option<crate::spectral::Mode>; 3],
}

fn static_point(k: f64, binding: &BindingPotential) -> Result<StaticPoint> {
    let params = SystemParams::adiabatic(k, 0.0)?;
    let dm = build_lambda(&build_g(&params, binding));
    let spectrum = classify(&dm)?;
    let mut slot_modes = [None, None, None];
    if !spectrum.is_confined() {
        let eigs = eigenvalues(&dm)?;
        for (out, slot) in slot_modes
            .iter_mut()
            .zip(slots(&eigs, &Tolerances::for_matrix(&dm)))
        {
            if slot.stable_simple {
                *out = mode_for(&dm, slot.eigenvalue).ok();
            }
        }
    }
    Ok(StaticPoint {
        spectrum: spectrum.is_confined().then_some(spectrum),
        dm,
        slot_modes,
    })
}

/// Adiabatic derivative curves `∂ωᵢ/∂ω|_{ω=0}` over a strictly increasing
/// positive `k` grid. Inside the confined interval, columns follow modes by
/// eigenvector continuity; elsewhere stable modes are placed by descending
/// frequency and unstable ones are left absent.
pub fn curve_fig2(k_grid: &[f64], binding: &BindingPotential) -> Result<CurveTable> {
    if k_grid.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
        return Err(Error::Domain("k grid must be positive and finite".into()));
    }
    if k_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("k grid must be strictly increasing".into()));
    }
    let points: Vec<StaticPoint> = k_grid
        .par_iter()
        .map(|&k| static_point(k, binding))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(k_grid.len());
    let mut prev: Option<(&ModeSpectrum, [usize; 3])> = None;
    for (&k, point) in k_grid.iter().zip(&points) {
        let mut row = CurveRow {
            k,
            cos_theta: cos_theta(k),
            dw: [None; 3],
            stable: [false; 3],
        };
        if let Some(spectrum) = &point.spectrum {
            let columns = match prev {
                Some((before, cols)) => match track_modes(before, spectrum) {
                    Ok(perm) => cols.map(|c| perm[c]),
                    Err(Error::AmbiguousTracking { .. }) => [0, 1, 2],
                    Err(e) => return Err(e),
                },
                None => [0, 1, 2],
            };
            for (col, &m) in columns.iter().enumerate() {
                row.dw[col] = Some(mode_derivative(&point.dm, &spectrum.modes[m]));
                row.stable[col] = true;
            }
            prev = Some((spectrum, columns));
        } else {
            for (col, mode) in point.slot_modes.iter().enumerate() {
                if let Some(mode) = mode {
                    row.dw[col] = Some(mode_derivative(&point.dm, mode));
                    row.stable[col] = true;
                }
            }
            prev = None;
        }
        rows.push(row);
    }
    Ok(CurveTable {
        binding: binding.to_string(),
        rows,
    })
}
