//! ADMM solver for the minimum-L1 AND/OR split.
//!
//! Work in AND (Möbius) coordinates. With `m = M u`, any OR effect vector `o`
//! contributes `C o` to the AND coordinates, where
//! `(C o)[S] = (-1)^(|S|+1) Σ_{R ⊇ S} o[R]`, and the AND effects are whatever
//! is left: `a = m - C o - M ε`. The split problem is then
//!
//! ```text
//! min ‖a‖₁ + ‖o‖₁   s.t.  a + C o + M ε = m,  |ε| <= bound
//! ```
//!
//! `C` and `M` are Kronecker products of 2x2 factors, so `I + CᵀC` and
//! `I + MᵀM` are diagonalized by a Kronecker butterfly and the quadratic
//! ADMM step is exact in `O(n 2^n)`. Index 0 carries no constraint in the
//! original problem; it gets a free slack on the AND side and `o[∅] = 0`.

use crate::lattice::{
    subset_mobius_in_place, subset_zeta_in_place, superset_mobius_in_place, superset_zeta_in_place,
};

/// Symmetric 2x2 factor `[[a, b], [b, d]]` lifted to `n` bits, kept in
/// eigen form.
struct KroneckerSpd {
    q: [[f64; 2]; 2],
    inv_diag: Vec<f64>,
}

impl KroneckerSpd {
    /// Prepares `(I + ⊗ g)⁻¹` for `g = [[a, b], [b, d]]`.
    fn shifted_inverse(a: f64, b: f64, d: f64, n: usize) -> Self {
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let lam = [mean - rad, mean + rad];
        let mut q = [[0.0; 2]; 2];
        for (k, &l) in lam.iter().enumerate() {
            // (b, l - a) is an eigenvector when b != 0
            let (x, y) = if b != 0.0 {
                (b, l - a)
            } else if k == 0 {
                if a <= d {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            } else if a <= d {
                (0.0, 1.0)
            } else {
                (1.0, 0.0)
            };
            let norm = (x * x + y * y).sqrt();
            q[0][k] = x / norm;
            q[1][k] = y / norm;
        }
        let len = 1usize << n;
        let inv_diag = (0..len)
            .map(|t| {
                let ev: f64 = (0..n).map(|i| lam[(t >> i) & 1]).product();
                1.0 / (1.0 + ev)
            })
            .collect();
        Self { q, inv_diag }
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let qt = [[self.q[0][0], self.q[1][0]], [self.q[0][1], self.q[1][1]]];
        butterfly(x, &qt);
        for (v, d) in x.iter_mut().zip(&self.inv_diag) {
            *v *= d;
        }
        butterfly(x, &self.q);
    }
}

fn butterfly(x: &mut [f64], f: &[[f64; 2]; 2]) {
    let len = x.len();
    let mut half = 1;
    while half < len {
        for block in x.chunks_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (l, h) in lo.iter_mut().zip(hi.iter_mut()) {
                let (a, b) = (*l, *h);
                *l = f[0][0] * a + f[0][1] * b;
                *h = f[1][0] * a + f[1][1] * b;
            }
        }
        half *= 2;
    }
}

#[inline]
fn parity_sign(t: usize) -> f64 {
    if t.count_ones() % 2 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// `out = C x`.
fn c_apply(x: &[f64], out: &mut [f64]) {
    out.copy_from_slice(x);
    superset_zeta_in_place(out);
    for (t, v) in out.iter_mut().enumerate() {
        *v *= parity_sign(t);
    }
}

/// `out = Cᵀ x`.
fn ct_apply(x: &[f64], out: &mut [f64]) {
    for (t, (o, v)) in out.iter_mut().zip(x).enumerate() {
        *o = parity_sign(t) * v;
    }
    subset_zeta_in_place(out);
}

fn m_apply(x: &[f64], out: &mut [f64]) {
    out.copy_from_slice(x);
    subset_mobius_in_place(out);
}

fn mt_apply(x: &[f64], out: &mut [f64]) {
    out.copy_from_slice(x);
    superset_mobius_in_place(out);
}

fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) struct SolverSettings {
    pub max_iters: usize,
    pub tol: f64,
    pub rho: f64,
    pub noise_bound: Option<f64>,
    /// Per-coordinate L1 weights `(and, or)`; `None` weighs everything 1.
    pub weights: Option<(Vec<f64>, Vec<f64>)>,
}

/// Best feasible iterate found.
pub(crate) struct SolverResult {
    pub or_effects: Vec<f64>,
    pub and_effects: Vec<f64>,
    pub epsilon: Option<Vec<f64>>,
    pub loss: f64,
    /// Best loss so far, one entry per iteration.
    pub history: Vec<f64>,
    /// Set when the candidate loss stopped being finite.
    pub diverged_at: Option<(usize, f64)>,
}

const BALANCE_EVERY: usize = 10;
const BALANCE_RATIO: f64 = 10.0;
const CG_MAX_STEPS: usize = 25;

pub(crate) fn solve(u: &[f64], init_or: Vec<f64>, settings: &SolverSettings) -> SolverResult {
    let len = u.len();
    let n = len.trailing_zeros() as usize;
    let mut m = u.to_vec();
    m[0] = 0.0;
    subset_mobius_in_place(&mut m);
    m[0] = 0.0;
    let m_norm = norm2(&m).max(f64::MIN_POSITIVE);

    // CᵀC = ⊗[[1,1],[1,2]], MᵀM = ⊗[[2,-1],[-1,1]]
    let c_solver = KroneckerSpd::shifted_inverse(1.0, 1.0, 2.0, n);
    let m_solver = settings
        .noise_bound
        .map(|_| KroneckerSpd::shifted_inverse(2.0, -1.0, 1.0, n));
    let bound = settings.noise_bound.unwrap_or(0.0);

    let mut rho = settings.rho;
    let mut o = init_or;
    o[0] = 0.0;
    let mut co = vec![0.0; len];
    c_apply(&o, &mut co);
    let mut a: Vec<f64> = m.iter().zip(&co).map(|(m, c)| m - c).collect();
    let mut p = o.clone();
    let mut e = vec![0.0; len];
    let mut me = vec![0.0; len];
    let mut q = vec![0.0; len];
    let (mut l1, mut l2, mut l3) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);

    let mut r1 = vec![0.0; len];
    let mut rhs_o = vec![0.0; len];
    let mut rhs_e = vec![0.0; len];
    let mut tmp = vec![0.0; len];
    let mut a_prev = vec![0.0; len];
    let mut p_prev = vec![0.0; len];
    let mut cand_a = vec![0.0; len];
    let mut cg = CgBuffers::new(len);

    let mut best = SolverResult {
        or_effects: p.clone(),
        and_effects: vec![0.0; len],
        epsilon: settings.noise_bound.map(|_| vec![0.0; len]),
        loss: f64::INFINITY,
        history: Vec::with_capacity(settings.max_iters),
        diverged_at: None,
    };

    for it in 0..settings.max_iters {
        // quadratic block
        for t in 0..len {
            r1[t] = m[t] - a[t] - l1[t];
        }
        ct_apply(&r1, &mut rhs_o);
        for t in 0..len {
            rhs_o[t] += p[t] - l2[t];
        }
        match &m_solver {
            None => {
                o.copy_from_slice(&rhs_o);
                c_solver.solve_in_place(&mut o);
            }
            Some(ms) => {
                mt_apply(&r1, &mut rhs_e);
                for t in 0..len {
                    rhs_e[t] += q[t] - l3[t];
                }
                cg.run(&c_solver, ms, &rhs_o, &rhs_e, &mut o, &mut e, settings.tol);
                m_apply(&e, &mut me);
            }
        }
        c_apply(&o, &mut co);

        // separable block
        a_prev.copy_from_slice(&a);
        p_prev.copy_from_slice(&p);
        let width = 1.0 / rho;
        for t in 0..len {
            let w = m[t] - co[t] - me[t] - l1[t];
            let (wa, wo) = match &settings.weights {
                Some((wa, wo)) => (wa[t], wo[t]),
                None => (1.0, 1.0),
            };
            a[t] = if t == 0 { w } else { soft(w, wa * width) };
            p[t] = if t == 0 {
                0.0
            } else {
                soft(o[t] + l2[t], wo * width)
            };
        }
        if m_solver.is_some() {
            for t in 0..len {
                q[t] = if t == 0 {
                    0.0
                } else {
                    (e[t] + l3[t]).clamp(-bound, bound)
                };
            }
        }

        // dual update and residuals
        let mut primal = 0.0;
        for t in 0..len {
            let d1 = a[t] + co[t] + me[t] - m[t];
            let d2 = o[t] - p[t];
            l1[t] += d1;
            l2[t] += d2;
            primal += d1 * d1 + d2 * d2;
            if m_solver.is_some() {
                let d3 = e[t] - q[t];
                l3[t] += d3;
                primal += d3 * d3;
            }
        }
        let primal = primal.sqrt();
        for t in 0..len {
            r1[t] = a[t] - a_prev[t];
        }
        ct_apply(&r1, &mut tmp);
        let dual = rho
            * (0..len)
                .map(|t| {
                    let d = tmp[t] - (p[t] - p_prev[t]);
                    d * d
                })
                .sum::<f64>()
                .sqrt();

        // exactly feasible candidate from the sparse iterates (p, q)
        c_apply(&p, &mut cand_a);
        if m_solver.is_some() {
            m_apply(&q, &mut tmp);
        } else {
            tmp.iter_mut().for_each(|v| *v = 0.0);
        }
        for t in 0..len {
            cand_a[t] = m[t] - cand_a[t] - tmp[t];
        }
        cand_a[0] = 0.0;
        let loss: f64 = match &settings.weights {
            None => cand_a.iter().chain(&p).map(|v| v.abs()).sum(),
            Some((wa, wo)) => {
                let and: f64 = cand_a.iter().zip(wa).map(|(v, w)| w * v.abs()).sum();
                and + p.iter().zip(wo).map(|(v, w)| w * v.abs()).sum::<f64>()
            }
        };
        if !loss.is_finite() {
            best.diverged_at = Some((it, loss));
            return best;
        }
        if loss < best.loss {
            best.loss = loss;
            best.or_effects.copy_from_slice(&p);
            best.and_effects.copy_from_slice(&cand_a);
            if let Some(eps) = best.epsilon.as_mut() {
                eps.copy_from_slice(&q);
            }
        }
        best.history.push(best.loss);

        let dual_scale = rho * (norm2(&l1) + norm2(&l2)).max(1.0);
        if primal <= settings.tol * m_norm && dual <= settings.tol * dual_scale {
            break;
        }
        if (it + 1) % BALANCE_EVERY == 0 {
            let (pr, dr) = (primal / m_norm, dual / dual_scale);
            let factor = if pr > BALANCE_RATIO * dr {
                2.0
            } else if dr > BALANCE_RATIO * pr {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                // scaled duals carry a 1/ρ factor
                for v in l1.iter_mut().chain(l2.iter_mut()).chain(l3.iter_mut()) {
                    *v /= factor;
                }
            }
        }
    }
    best
}

/// Preconditioned conjugate gradients on the joint `(o, ε)` normal equations
/// `[[I + CᵀC, CᵀM], [MᵀC, I + MᵀM]]`.
struct CgBuffers {
    ro: Vec<f64>,
    re: Vec<f64>,
    zo: Vec<f64>,
    ze: Vec<f64>,
    po: Vec<f64>,
    pe: Vec<f64>,
    ao: Vec<f64>,
    ae: Vec<f64>,
    t1: Vec<f64>,
    t2: Vec<f64>,
}

impl CgBuffers {
    fn new(len: usize) -> Self {
        let z = || vec![0.0; len];
        Self {
            ro: z(),
            re: z(),
            zo: z(),
            ze: z(),
            po: z(),
            pe: z(),
            ao: z(),
            ae: z(),
            t1: z(),
            t2: z(),
        }
    }

    /// `(ao, ae) = A (xo, xe)`.
    fn apply(
        t1: &mut [f64],
        t2: &mut [f64],
        xo: &[f64],
        xe: &[f64],
        ao: &mut [f64],
        ae: &mut [f64],
    ) {
        c_apply(xo, t1);
        m_apply(xe, t2);
        for (a, b) in t1.iter_mut().zip(t2.iter()) {
            *a += b;
        }
        ct_apply(t1, ao);
        mt_apply(t1, ae);
        for (a, x) in ao.iter_mut().zip(xo) {
            *a += x;
        }
        for (a, x) in ae.iter_mut().zip(xe) {
            *a += x;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn run(
        &mut self,
        c_solver: &KroneckerSpd,
        m_solver: &KroneckerSpd,
        bo: &[f64],
        be: &[f64],
        xo: &mut [f64],
        xe: &mut [f64],
        tol: f64,
    ) {
        let b_norm = (norm2(bo).powi(2) + norm2(be).powi(2)).sqrt();
        Self::apply(
            &mut self.t1,
            &mut self.t2,
            xo,
            xe,
            &mut self.ao,
            &mut self.ae,
        );
        for t in 0..bo.len() {
            self.ro[t] = bo[t] - self.ao[t];
            self.re[t] = be[t] - self.ae[t];
        }
        let precondition = |s: &mut Self| {
            s.zo.copy_from_slice(&s.ro);
            c_solver.solve_in_place(&mut s.zo);
            s.ze.copy_from_slice(&s.re);
            m_solver.solve_in_place(&mut s.ze);
        };
        precondition(self);
        self.po.copy_from_slice(&self.zo);
        self.pe.copy_from_slice(&self.ze);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut rz = dot(&self.ro, &self.zo) + dot(&self.re, &self.ze);
        for _ in 0..CG_MAX_STEPS {
            let r_norm = (norm2(&self.ro).powi(2) + norm2(&self.re).powi(2)).sqrt();
            if rz <= 0.0 || r_norm <= 0.01 * tol * b_norm {
                break;
            }
            Self::apply(
                &mut self.t1,
                &mut self.t2,
                &self.po,
                &self.pe,
                &mut self.ao,
                &mut self.ae,
            );
            let curv = dot(&self.po, &self.ao) + dot(&self.pe, &self.ae);
            if curv <= 0.0 {
                break;
            }
            let alpha = rz / curv;
            for t in 0..bo.len() {
                xo[t] += alpha * self.po[t];
                xe[t] += alpha * self.pe[t];
                self.ro[t] -= alpha * self.ao[t];
                self.re[t] -= alpha * self.ae[t];
            }
            precondition(self);
            let rz_next = dot(&self.ro, &self.zo) + dot(&self.re, &self.ze);
            let beta = rz_next / rz;
            rz = rz_next;
            for t in 0..bo.len() {
                self.po[t] = self.zo[t] + beta * self.po[t];
                self.pe[t] = self.ze[t] + beta * self.pe[t];
            }
        }
    }
}
