//! Test-only helpers shared by the integration tests: a truncated-Fock
//! representation of the generator, random sampling of confined points and
//! small numeric utilities.

#![allow(dead_code)]

use faer::{Mat, Side};
type C64 = nalgebra::Complex<f64>;

use penning_phases::model::{build_g, build_lambda, BindingPotential, SystemParams};
use penning_phases::spectral::{classify, ModeSpectrum};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Generator `G = ½(p − A)² + V − ωL₃` written out directly from the vector
/// potential `A = (b0·x₂, −b0·x₁ + b·x₃, −b·x₂)` and diagonal curvatures.
pub struct PhysicalPoint {
    pub b: f64,
    pub b0: f64,
    pub curvatures: [f64; 3],
    pub omega: f64,
}

impl PhysicalPoint {
    pub fn penning(b: f64, b0: f64, w0: f64, omega: f64) -> Self {
        let w2 = w0 * w0;
        Self {
            b,
            b0,
            curvatures: [-0.5 * w2, -0.5 * w2, w2],
            omega,
        }
    }

    pub fn oscillator(b: f64, b0: f64, w0: f64, omega: f64) -> Self {
        Self {
            b,
            b0,
            curvatures: [w0 * w0; 3],
            omega,
        }
    }

    /// Coefficients `W` with `G = Σᵢⱼ Wᵢⱼ uᵢ uⱼ`, `u = (x₁,x₂,x₃,p₁,p₂,p₃)`.
    pub fn weights(&self) -> [[f64; 6]; 6] {
        let (b, b0) = (self.b, self.b0);
        // kinetic momenta pᵢ − Aᵢ as linear forms in u
        let pi = [
            [0.0, -b0, 0.0, 1.0, 0.0, 0.0],
            [b0, 0.0, -b, 0.0, 1.0, 0.0],
            [0.0, b, 0.0, 0.0, 0.0, 1.0],
        ];
        let mut w = [[0.0; 6]; 6];
        for form in &pi {
            for i in 0..6 {
                for j in 0..6 {
                    w[i][j] += 0.5 * form[i] * form[j];
                }
            }
        }
        for a in 0..3 {
            w[a][a] += 0.5 * self.curvatures[a];
        }
        let l3 = l3_weights();
        for i in 0..6 {
            for j in 0..6 {
                w[i][j] -= self.omega * l3[i][j];
            }
        }
        w
    }

    /// Axis frequencies used as the oscillator basis: `sqrt(Sₐₐ/S_{a+3,a+3})`
    /// with a floor so that the basis stays normalizable.
    pub fn reference_frequencies(&self) -> [f64; 3] {
        let w = self.weights();
        [0, 1, 2].map(|a| (2.0 * w[a][a]).max(0.05).sqrt() / (2.0 * w[a + 3][a + 3]).sqrt())
    }
}

/// `L₃ = x₁p₂ − x₂p₁`
pub fn l3_weights() -> [[f64; 6]; 6] {
    let mut w = [[0.0; 6]; 6];
    w[0][4] = 1.0;
    w[1][3] = -1.0;
    w
}

type Dense = Vec<Vec<C64>>;

fn zeros(n: usize) -> Dense {
    vec![vec![C64::new(0.0, 0.0); n]; n]
}

fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let mut c = zeros(n);
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// Single-axis `x` and `p` on `n` levels for oscillator frequency `w`.
fn ladder_ops(n: usize, w: f64) -> (Dense, Dense) {
    let mut x = zeros(n);
    let mut p = zeros(n);
    for k in 1..n {
        let s = (k as f64).sqrt();
        let xs = s / (2.0 * w).sqrt();
        let ps = s * (w / 2.0).sqrt();
        x[k - 1][k] = C64::new(xs, 0.0);
        x[k][k - 1] = C64::new(xs, 0.0);
        // p = i sqrt(w/2) (a† − a)
        p[k][k - 1] = C64::new(0.0, ps);
        p[k - 1][k] = C64::new(0.0, -ps);
    }
    (x, p)
}

/// Sparse single-axis operator: nonzero `(row, col, value)` entries.
type Sparse = Vec<(usize, usize, C64)>;

fn sparsify(d: &Dense, n: usize) -> Sparse {
    let mut out = Vec::new();
    for (i, row) in d.iter().enumerate().take(n) {
        for (j, v) in row.iter().enumerate().take(n) {
            if v.re != 0.0 || v.im != 0.0 {
                out.push((i, j, *v));
            }
        }
    }
    out
}

/// Truncated product-basis representation with `n` levels per axis.
pub struct FockSpace {
    pub n: usize,
    pub freqs: [f64; 3],
    /// per axis: [x, p] on n levels
    single: Vec<[Sparse; 2]>,
    /// per axis: products u_i u_j (same axis) computed on n+2 levels then truncated
    pair: Vec<[[Sparse; 2]; 2]>,
}

impl FockSpace {
    pub fn new(n: usize, freqs: [f64; 3]) -> Self {
        let mut single = Vec::new();
        let mut pair = Vec::new();
        for w in freqs {
            let (xb, pb) = ladder_ops(n + 2, w);
            let ops = [xb, pb];
            single.push([sparsify(&ops[0], n), sparsify(&ops[1], n)]);
            let prod = |a: usize, b: usize| sparsify(&matmul(&ops[a], &ops[b]), n);
            pair.push([[prod(0, 0), prod(0, 1)], [prod(1, 0), prod(1, 1)]]);
        }
        Self {
            n,
            freqs,
            single,
            pair,
        }
    }

    pub fn dim(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn index(&self, q: [usize; 3]) -> usize {
        q[0] + self.n * (q[1] + self.n * q[2])
    }

    pub fn quanta(&self, idx: usize) -> [usize; 3] {
        [
            idx % self.n,
            (idx / self.n) % self.n,
            idx / (self.n * self.n),
        ]
    }

    /// Sorted, merged `(row, col, value)` entries of `Σ Wᵢⱼ uᵢ uⱼ`.
    pub fn operator(&self, w: &[[f64; 6]; 6]) -> Vec<(usize, usize, C64)> {
        let n = self.n;
        let identity: Sparse = (0..n).map(|k| (k, k, C64::new(1.0, 0.0))).collect();
        let mut entries = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                let weight = w[i][j];
                if weight == 0.0 {
                    continue;
                }
                let (ai, ki) = (i % 3, i / 3);
                let (aj, kj) = (j % 3, j / 3);
                let mut axes: [&Sparse; 3] = [&identity, &identity, &identity];
                if ai == aj {
                    axes[ai] = &self.pair[ai][ki][kj];
                } else {
                    axes[ai] = &self.single[ai][ki];
                    axes[aj] = &self.single[aj][kj];
                }
                for &(r0, c0, v0) in axes[0] {
                    for &(r1, c1, v1) in axes[1] {
                        let v01 = v0 * v1;
                        for &(r2, c2, v2) in axes[2] {
                            let row = self.index([r0, r1, r2]);
                            let col = self.index([c0, c1, c2]);
                            entries.push((row, col, v01 * v2 * weight));
                        }
                    }
                }
            }
        }
        entries.sort_by_key(|e| (e.0, e.1));
        let mut merged: Vec<(usize, usize, C64)> = Vec::with_capacity(entries.len());
        for e in entries {
            match merged.last_mut() {
                Some(last) if last.0 == e.0 && last.1 == e.1 => last.2 += e.2,
                _ => merged.push(e),
            }
        }
        merged
    }

    /// Basis indices with total quanta of the given parity.
    pub fn block(&self, parity: usize) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.quanta(i).iter().sum::<usize>() % 2 == parity)
            .collect()
    }
}

/// Eigenpair of a parity block, eigenvector in full-space coordinates.
pub struct EigenState {
    pub energy: f64,
    pub vector: Vec<C64>,
}

/// Dense Hermitian eigendecomposition of one parity block, through the real
/// symmetric embedding `[[Re H, −Im H], [Im H, Re H]]`. Each eigenvalue of
/// the embedding appears twice; `a + i·b` recovers the complex eigenvector.
pub fn dense_block_states(
    space: &FockSpace,
    op: &[(usize, usize, C64)],
    parity: usize,
) -> Vec<EigenState> {
    let block = space.block(parity);
    let mut position = vec![usize::MAX; space.dim()];
    for (k, &i) in block.iter().enumerate() {
        position[i] = k;
    }
    let m = block.len();
    let mut mat = Mat::<f64>::zeros(2 * m, 2 * m);
    for &(r, c, v) in op {
        let (pr, pc) = (position[r], position[c]);
        if pr != usize::MAX && pc != usize::MAX {
            for (dr, dc, x) in [(0, 0, v.re), (m, m, v.re), (0, m, -v.im), (m, 0, v.im)] {
                mat.write(pr + dr, pc + dc, mat.read(pr + dr, pc + dc) + x);
            }
        }
    }
    let eig = mat.selfadjoint_eigendecomposition(Side::Lower);
    let s = eig.s().column_vector();
    let u = eig.u();
    (0..m)
        .map(|k| {
            let col = 2 * k;
            let mut vector = vec![C64::new(0.0, 0.0); space.dim()];
            for (row, &i) in block.iter().enumerate() {
                vector[i] = C64::new(u.read(row, col), u.read(row + m, col));
            }
            EigenState {
                energy: s.read(col),
                vector,
            }
        })
        .collect()
}

/// `⟨ψ|O|ψ⟩` for a sparse operator.
pub fn expectation(op: &[(usize, usize, C64)], psi: &[C64]) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for &(r, c, v) in op {
        acc += psi[r].conj() * v * psi[c];
    }
    acc.re
}

/// Weight of `ψ` on basis states with some axis within two levels of the
/// cutoff.
pub fn edge_weight(space: &FockSpace, psi: &[C64]) -> f64 {
    psi.iter()
        .enumerate()
        .filter(|(i, _)| space.quanta(*i).iter().any(|&q| q + 2 >= space.n))
        .map(|(_, v)| v.norm_sqr())
        .sum()
}

/// Lowest `count` eigenpairs of one parity block by Lanczos with full
/// reorthogonalization. Only meaningful where `G` is bounded below.
pub fn lanczos_states(
    space: &FockSpace,
    op: &[(usize, usize, C64)],
    parity: usize,
    count: usize,
    iterations: usize,
) -> Vec<EigenState> {
    let block = space.block(parity);
    let mut position = vec![usize::MAX; space.dim()];
    for (k, &i) in block.iter().enumerate() {
        position[i] = k;
    }
    let m = block.len();
    let local: Vec<(usize, usize, C64)> = op
        .iter()
        .filter(|(r, c, _)| position[*r] != usize::MAX && position[*c] != usize::MAX)
        .map(|&(r, c, v)| (position[r], position[c], v))
        .collect();
    let apply = |x: &[C64]| {
        let mut y = vec![C64::new(0.0, 0.0); m];
        for &(r, c, v) in &local {
            y[r] += v * x[c];
        }
        y
    };
    let dot = |a: &[C64], b: &[C64]| {
        a.iter()
            .zip(b)
            .fold(C64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * *y)
    };
    // deterministic start vector with weight on every state
    let mut v: Vec<C64> = (0..m)
        .map(|k| C64::new(1.0 / (1.0 + k as f64), 0.0))
        .collect();
    let norm = dot(&v, &v).re.sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut basis: Vec<Vec<C64>> = vec![v];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for it in 0..iterations.min(m) {
        let mut w = apply(&basis[it]);
        alpha.push(dot(&basis[it], &w).re);
        for _ in 0..2 {
            for q in &basis {
                let proj = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= proj * *y);
            }
        }
        let b = dot(&w, &w).re.sqrt();
        if b < 1e-12 || it + 1 == iterations.min(m) {
            break;
        }
        beta.push(b);
        w.iter_mut().for_each(|x| *x /= b);
        basis.push(w);
    }
    let k = alpha.len();
    let t = nalgebra::DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j || j + 1 == i {
            beta[i.min(j)]
        } else {
            0.0
        }
    });
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    order
        .into_iter()
        .take(count)
        .map(|col| {
            let mut local_vec = vec![C64::new(0.0, 0.0); m];
            for (row, q) in basis.iter().take(k).enumerate() {
                let y = eig.eigenvectors[(row, col)];
                local_vec.iter_mut().zip(q).for_each(|(x, b)| *x += b * y);
            }
            let mut vector = vec![C64::new(0.0, 0.0); space.dim()];
            for (row, &i) in block.iter().enumerate() {
                vector[i] = local_vec[row];
            }
            EigenState {
                energy: eig.eigenvalues[col],
                vector,
            }
        })
        .collect()
}

/// `‖(O − E)ψ‖` for a sparse operator.
pub fn residual_norm(op: &[(usize, usize, C64)], state: &EigenState) -> f64 {
    let mut y: Vec<C64> = state.vector.iter().map(|v| -v * state.energy).collect();
    for &(r, c, v) in op {
        y[r] += v * state.vector[c];
    }
    y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Predicted quasienergies `Σ εᵢωᵢ(nᵢ + ½)` for all labels with at most
/// `max_quanta` total quanta, sorted ascending.
pub fn enumerate_levels(freqs: &[f64], signs: &[f64], max_quanta: u32) -> Vec<(f64, [u32; 3])> {
    let mut out = Vec::new();
    for n1 in 0..=max_quanta {
        for n2 in 0..=max_quanta - n1 {
            for n3 in 0..=max_quanta - n1 - n2 {
                let n = [n1, n2, n3];
                let e: f64 = (0..3)
                    .map(|i| signs[i] * freqs[i] * (f64::from(n[i]) + 0.5))
                    .sum();
                out.push((e, n));
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

pub fn spectrum_of(params: &SystemParams, binding: &BindingPotential) -> ModeSpectrum {
    classify(&build_lambda(&build_g(params, binding))).expect("classification succeeds")
}

/// Smallest pairwise frequency gap and smallest frequency of a confined spectrum.
pub fn separation(spectrum: &ModeSpectrum) -> f64 {
    let f = spectrum.frequencies();
    let mut gap = f.iter().copied().fold(f64::INFINITY, f64::min);
    for i in 0..f.len() {
        for j in i + 1..f.len() {
            gap = gap.min((f[i] - f[j]).abs());
        }
    }
    gap
}

/// Random confined Penning-loop points with physical `ω ∈ [0.2, 2]`,
/// frequencies separated by at least `min_sep`.
pub fn random_confined(rng: &mut ChaCha8Rng, count: usize, min_sep: f64) -> Vec<SystemParams> {
    let mut out = Vec::new();
    while out.len() < count {
        let omega = rng.gen_range(0.2..2.0);
        let b = rng.gen_range(0.0..3.0) * omega;
        let b0 = rng.gen_range(0.05..3.0) * omega;
        let p = SystemParams::penning_loop(b, b0, omega).unwrap();
        let s = spectrum_of(&p, &BindingPotential::PenningQuadrupole);
        if s.is_confined() && separation(&s) > min_sep && s.max_real_part().abs() < 1e-12 {
            out.push(p);
        }
    }
    out
}

/// Predicted-versus-oracle values for the ground and one-quantum states.
pub struct FockComparison {
    /// (predicted, oracle) quasienergies
    pub energies: Vec<(f64, f64)>,
    /// (predicted, oracle) `⟨L₃⟩`
    pub l3: Vec<(f64, f64)>,
    /// largest mismatch over the lowest `levels_checked` enumerated levels
    pub level_error: f64,
    pub levels_checked: usize,
}

impl FockComparison {
    pub fn max_error(&self) -> f64 {
        self.energies
            .iter()
            .chain(&self.l3)
            .map(|(p, o)| (p - o).abs())
            .fold(self.level_error, f64::max)
    }
}

pub fn ground_and_one_quantum() -> [penning_phases::FockLabel; 4] {
    use penning_phases::FockLabel;
    [
        FockLabel::ground(),
        FockLabel::new(1, 0, 0),
        FockLabel::new(0, 1, 0),
        FockLabel::new(0, 0, 1),
    ]
}

/// Compares against the oracle at a point where all Krein signs are
/// positive, so `G` is bounded below and its lowest eigenvalues must be the
/// lowest predicted levels in order.
pub fn compare_positive_definite(
    params: &SystemParams,
    binding: &BindingPotential,
    point: &PhysicalPoint,
    cutoff: usize,
) -> Result<FockComparison, String> {
    use penning_phases::model::build_l3_form;
    use penning_phases::phases::{expectation_quadratic, quasienergy};
    use penning_phases::spectral::normal_mode_basis;

    let spectrum = spectrum_of(params, binding);
    if !spectrum.is_confined() || spectrum.krein_sum() != 3.0 {
        return Err("point is not positive definite".into());
    }
    let basis =
        normal_mode_basis(&spectrum, &build_g(params, binding)).map_err(|e| e.to_string())?;
    let space = FockSpace::new(cutoff, point.reference_frequencies());
    let g = space.operator(&point.weights());
    let l3 = space.operator(&l3_weights());
    // enough states per parity to reach the highest one-quantum level
    let top = ground_and_one_quantum()
        .iter()
        .map(|n| quasienergy(&basis, n))
        .fold(0.0, f64::max);
    let freqs = spectrum.frequencies();
    let max_quanta = (top / freqs.iter().copied().fold(f64::INFINITY, f64::min)).ceil() as u32;
    let levels = enumerate_levels(&freqs, &[1.0; 3], max_quanta);
    let per_parity = |parity: u32| {
        2 + levels
            .iter()
            .filter(|(e, n)| *e <= top + 1e-3 && n.iter().sum::<u32>() % 2 == parity)
            .count()
    };
    let states = [
        lanczos_states(&space, &g, 0, per_parity(0), 300),
        lanczos_states(&space, &g, 1, per_parity(1), 300),
    ];
    for s in states.iter().flatten() {
        let r = residual_norm(&g, s);
        if r > 1e-7 {
            return Err(format!(
                "oracle state at {} not converged (residual {r:.2e})",
                s.energy
            ));
        }
    }

    let mut oracle: Vec<f64> = states.iter().flatten().map(|s| s.energy).collect();
    oracle.sort_by(f64::total_cmp);
    let levels_checked = 8;
    let level_error = levels
        .iter()
        .zip(&oracle)
        .take(levels_checked)
        .map(|((p, _), o)| (p - o).abs())
        .fold(0.0, f64::max);

    let mut energies = Vec::new();
    let mut l3_pairs = Vec::new();
    for n in ground_and_one_quantum() {
        let predicted = quasienergy(&basis, &n);
        let parity = (n.n.iter().sum::<u32>() % 2) as usize;
        let candidates = &states[parity];
        let state = candidates
            .iter()
            .min_by(|a, b| {
                (a.energy - predicted)
                    .abs()
                    .total_cmp(&(b.energy - predicted).abs())
            })
            .unwrap();
        if (state.energy - predicted).abs() > 1e-3 {
            return Err(format!(
                "no oracle level near {predicted} (closest {})",
                state.energy
            ));
        }
        if candidates
            .iter()
            .filter(|s| (s.energy - state.energy).abs() < 1e-4)
            .count()
            != 1
        {
            return Err(format!("degenerate oracle level near {predicted}"));
        }
        energies.push((predicted, state.energy));
        l3_pairs.push((
            expectation_quadratic(&build_l3_form(), &basis, &n),
            expectation(&l3, &state.vector),
        ));
    }
    Ok(FockComparison {
        energies,
        l3: l3_pairs,
        level_error,
        levels_checked,
    })
}

/// Largest change of the lowest two levels per parity block when the
/// cutoff is doubled.
pub fn cutoff_doubling_change(point: &PhysicalPoint, cutoff: usize) -> f64 {
    let freqs = point.reference_frequencies();
    let w = point.weights();
    let mut worst: f64 = 0.0;
    for parity in 0..2 {
        let coarse_space = FockSpace::new(cutoff, freqs);
        let coarse = lanczos_states(&coarse_space, &coarse_space.operator(&w), parity, 2, 200);
        let fine_space = FockSpace::new(2 * cutoff, freqs);
        let fine = lanczos_states(&fine_space, &fine_space.operator(&w), parity, 2, 200);
        for (a, b) in coarse.iter().zip(&fine) {
            worst = worst.max((a.energy - b.energy).abs());
        }
    }
    worst
}
