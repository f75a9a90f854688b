//! Reference models: the transverse-field Ising chain with its parity
//! symmetry and the Bose-Hubbard ring with a barrier and gauge flux, plus a
//! dense exact-diagonalization oracle restricted to one symmetry sector.

use crate::dense::DenseTensor;
use crate::error::{Result, TnError};
use crate::kernel;
use crate::network::{AnsatzOptions, Geometry, Network};
use crate::operators::{LocalOp, Tpo};
use crate::symm::{Dir, Group, SymLink, SymTensor};
use crate::C64;
use std::f64::consts::PI;

/// Largest sector dimension the oracle diagonalizes.
pub const ORACLE_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn label(self) -> i64 {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }
}

/// `H = −Σ σx σx + λ Σ σz`, spin up (`σz = +1`) in parity sector 0.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingSpec {
    pub n: usize,
    pub lambda: f64,
    pub pbc: bool,
    pub sector: Parity,
}

/// `H = −t Σ (e^{−2πiΩ/N} b†_s b_{s+1} + h.c.) + U/2 Σ n(n−1) + β n_{s_b}`
/// with `N_b` bosons and local cutoff `d` (occupations `0..d`).
#[derive(Clone, Debug, PartialEq)]
pub struct BoseHubbardSpec {
    pub n: usize,
    pub n_b: usize,
    pub d: usize,
    pub t: f64,
    pub u: f64,
    pub beta: f64,
    pub s_b: usize,
    pub omega: f64,
    pub pbc: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Ising(IsingSpec),
    BoseHubbard(BoseHubbardSpec),
}

fn pauli_x() -> DenseTensor {
    DenseTensor::from_real(&[2, 2], &[0.0, 1.0, 1.0, 0.0]).unwrap()
}

fn pauli_z() -> DenseTensor {
    DenseTensor::from_real(&[2, 2], &[1.0, 0.0, 0.0, -1.0]).unwrap()
}

/// `b†` on occupations `0..d`, entry `[n+1, n] = √(n+1)`.
fn creation(d: usize) -> DenseTensor {
    let mut m = DenseTensor::zeros(&[d, d]);
    for n in 0..d - 1 {
        m.data_mut()[(n + 1) + d * n] = C64::new(((n + 1) as f64).sqrt(), 0.0);
    }
    m
}

fn annihilation(d: usize) -> DenseTensor {
    let mut m = DenseTensor::zeros(&[d, d]);
    for n in 0..d - 1 {
        m.data_mut()[n + d * (n + 1)] = C64::new(((n + 1) as f64).sqrt(), 0.0);
    }
    m
}

/// Stacks `[d, d]` matrices along a third link of dimension `ms.len()`.
fn stack(ms: &[DenseTensor]) -> DenseTensor {
    let d = ms[0].dims()[0];
    let mut data = Vec::with_capacity(d * d * ms.len());
    for m in ms {
        data.extend_from_slice(m.data());
    }
    DenseTensor::new(vec![d, d, ms.len()], data).unwrap()
}

impl ModelSpec {
    pub fn num_sites(&self) -> usize {
        match self {
            ModelSpec::Ising(s) => s.n,
            ModelSpec::BoseHubbard(s) => s.n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_sites();
        if n < 4 {
            return Err(TnError::Config(format!("at least 4 sites are required, got {n}")));
        }
        if !n.is_power_of_two() {
            return Err(TnError::Config(format!("binary trees need a power-of-two size, got {n}")));
        }
        match self {
            ModelSpec::Ising(s) => {
                if !s.lambda.is_finite() {
                    return Err(TnError::Config("transverse field must be finite".into()));
                }
            }
            ModelSpec::BoseHubbard(s) => {
                if s.d < 2 {
                    return Err(TnError::Config("local dimension below 2".into()));
                }
                if s.n_b > (s.d - 1) * s.n {
                    return Err(TnError::Config(format!(
                        "{} bosons do not fit {} sites with cutoff {}",
                        s.n_b, s.n, s.d
                    )));
                }
                if s.s_b >= s.n {
                    return Err(TnError::Config(format!("barrier site {} out of range", s.s_b)));
                }
                if ![s.t, s.u, s.beta, s.omega].iter().all(|x| x.is_finite()) {
                    return Err(TnError::Config("model couplings must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn group(&self, symmetric: bool) -> Group {
        match (self, symmetric) {
            (_, false) => Group::trivial(),
            (ModelSpec::Ising(_), true) => Group::zn(2),
            (ModelSpec::BoseHubbard(_), true) => Group::u1(),
        }
    }

    /// Local basis: spin up/down as parity 0/1, or occupation `n` as charge
    /// `n`; a plain link when unsymmetric.
    pub fn phys_link(&self, symmetric: bool) -> SymLink {
        match (self, symmetric) {
            (ModelSpec::Ising(_), false) => SymLink::plain(2),
            (ModelSpec::Ising(_), true) => SymLink::from_pairs(Group::zn(2), &[(0, 1), (1, 1)]).unwrap(),
            (ModelSpec::BoseHubbard(s), false) => SymLink::plain(s.d),
            (ModelSpec::BoseHubbard(s), true) => {
                let pairs: Vec<(i64, usize)> = (0..s.d as i64).map(|q| (q, 1)).collect();
                SymLink::from_pairs(Group::u1(), &pairs).unwrap()
            }
        }
    }

    /// The targeted global sector. Bose-Hubbard needs the symmetric mode,
    /// since nothing else fixes the particle number.
    pub fn selector(&self, symmetric: bool) -> Result<SymLink> {
        match (self, symmetric) {
            (ModelSpec::Ising(_), false) => Ok(SymLink::plain(1)),
            (ModelSpec::Ising(s), true) => SymLink::from_pairs(Group::zn(2), &[(s.sector.label(), 1)]),
            (ModelSpec::BoseHubbard(_), false) => Err(TnError::Config(
                "Bose-Hubbard runs need the U(1) symmetric mode to fix the boson number".into(),
            )),
            (ModelSpec::BoseHubbard(s), true) => SymLink::from_pairs(Group::u1(), &[(s.n_b as i64, 1)]),
        }
    }

    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::binary_tree(self.num_sites())
    }

    /// Random bTTN in the targeted sector.
    pub fn initial_network(&self, bond_dim: usize, seed: u64, symmetric: bool) -> Result<Network> {
        self.validate()?;
        let phys = vec![self.phys_link(symmetric); self.num_sites()];
        Network::random_ansatz(
            self.geometry()?,
            &phys,
            &self.selector(symmetric)?,
            &AnsatzOptions::new(bond_dim, seed),
        )
    }

    pub fn tpo(&self, symmetric: bool) -> Result<Tpo> {
        self.validate()?;
        match self {
            ModelSpec::Ising(s) => ising_tpo(s, symmetric),
            ModelSpec::BoseHubbard(s) => bose_hubbard_tpo(s, symmetric),
        }
    }
}

fn bonds(n: usize, pbc: bool) -> usize {
    if pbc {
        n
    } else {
        n - 1
    }
}

/// Either half of `σx σx`: `σx` times `coeff` with one TPO link of parity 1
/// (dimension 1 when unsymmetric) pointing `d`.
fn sx_half(s: &IsingSpec, site: usize, symmetric: bool, d: Dir, coeff: f64) -> Result<LocalOp> {
    let spec = ModelSpec::Ising(s.clone());
    let p = spec.phys_link(symmetric);
    let mu = if symmetric {
        SymLink::from_pairs(Group::zn(2), &[(1, 1)])?
    } else {
        SymLink::plain(1)
    };
    let m = pauli_x().scale(C64::new(coeff, 0.0)).reshape(&[2, 2, 1])?;
    let op = SymTensor::from_dense(vec![p.clone(), p, mu], vec![Dir::In, Dir::Out, d], &m, 0.0)?;
    Ok(LocalOp::new(site, op, vec![0]))
}

fn ising_tpo(s: &IsingSpec, symmetric: bool) -> Result<Tpo> {
    let spec = ModelSpec::Ising(s.clone());
    let mut h = Tpo::new(vec![spec.phys_link(symmetric); s.n]);
    for b in 0..bonds(s.n, s.pbc) {
        h.add_term(vec![
            sx_half(s, b, symmetric, Dir::Out, -1.0)?,
            sx_half(s, (b + 1) % s.n, symmetric, Dir::In, 1.0)?,
        ])?;
    }
    for site in 0..s.n {
        h.add_local(site, s.lambda, &pauli_z())?;
    }
    Ok(h)
}

/// One term per bond: the TPO link carries charge `+1` for `b†_s b_{s+1}`
/// and `−1` for its conjugate, so a cut crosses one link per bond. The
/// hopping coefficients, phase included, sit on the left operator.
fn bose_hubbard_tpo(s: &BoseHubbardSpec, symmetric: bool) -> Result<Tpo> {
    let spec = ModelSpec::BoseHubbard(s.clone());
    let p = spec.phys_link(symmetric);
    let d = s.d;
    let mut h = Tpo::new(vec![p.clone(); s.n]);
    let phase = C64::from_polar(1.0, -2.0 * PI * s.omega / s.n as f64);
    let (bd, b) = (creation(d), annihilation(d));
    let mu = if symmetric {
        SymLink::from_pairs(Group::u1(), &[(-1, 1), (1, 1)])?
    } else {
        SymLink::plain(2)
    };
    // dense index 0 is charge −1, index 1 is charge +1
    let left = stack(&[
        b.scale(-s.t * phase.conj()),
        bd.scale(-s.t * phase),
    ]);
    let right = stack(&[bd.clone(), b.clone()]);
    for site in 0..bonds(s.n, s.pbc) {
        let a = SymTensor::from_dense(vec![p.clone(), p.clone(), mu.clone()], vec![Dir::In, Dir::Out, Dir::Out], &left, 0.0)?;
        let c = SymTensor::from_dense(vec![p.clone(), p.clone(), mu.clone()], vec![Dir::In, Dir::Out, Dir::In], &right, 0.0)?;
        h.add_term(vec![LocalOp::new(site, a, vec![0]), LocalOp::new((site + 1) % s.n, c, vec![0])])?;
    }
    let mut onsite = DenseTensor::zeros(&[d, d]);
    for k in 0..d {
        let nf = k as f64;
        onsite.data_mut()[k + d * k] = C64::new(0.5 * s.u * nf * (nf - 1.0), 0.0);
    }
    for site in 0..s.n {
        let mut m = onsite.clone();
        if site == s.s_b {
            for k in 0..d {
                m.data_mut()[k + d * k] += C64::new(s.beta * k as f64, 0.0);
            }
        }
        if m.max_abs() > 0.0 {
            h.add_local(site, 1.0, &m)?;
        }
    }
    Ok(h)
}

/// Ground-state energy per site of the critical periodic Ising chain,
/// `−(2/N) / sin(π/2N)`.
pub fn ising_exact_energy_per_site(n: usize) -> f64 {
    let nf = n as f64;
    -(2.0 / nf) / (PI / (2.0 * nf)).sin()
}

/// Spectrum of one symmetry sector. `basis[i]` is the full-space index
/// (site 0 fastest) of the `i`-th sector state; `states[k]` is over the
/// sector basis.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub energies: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    pub basis: Vec<usize>,
    pub full_dim: usize,
}

impl Spectrum {
    /// Eigenvector `k` embedded into the full space.
    pub fn full_state(&self, k: usize) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); self.full_dim];
        for (i, &b) in self.basis.iter().enumerate() {
            v[b] = self.states[k][i];
        }
        v
    }
}

fn digits(mut x: usize, d: usize, n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(x % d);
        x /= d;
    }
    out
}

fn undigits(v: &[usize], d: usize) -> usize {
    v.iter().rev().fold(0, |a, &x| a * d + x)
}

/// Full diagonalization of the model in one sector, written out directly
/// in the occupation basis. With `restrict` unset the whole Ising space is
/// diagonalized; Bose-Hubbard always uses the fixed-`N_b` sector.
pub fn exact_diag_oracle(spec: &ModelSpec, restrict: bool) -> Result<Spectrum> {
    spec.validate()?;
    let n = spec.num_sites();
    let (d, keep): (usize, Box<dyn Fn(&[usize]) -> bool>) = match spec {
        ModelSpec::Ising(s) => {
            let want = s.sector.label() as usize;
            (2, Box::new(move |c: &[usize]| !restrict || c.iter().sum::<usize>() % 2 == want))
        }
        ModelSpec::BoseHubbard(s) => {
            let nb = s.n_b;
            (s.d, Box::new(move |c: &[usize]| c.iter().sum::<usize>() == nb))
        }
    };
    let full = (d as u128).pow(n as u32);
    // counting first keeps oversized full spaces out of memory
    if full > (1u128 << 26) {
        return Err(TnError::CapExceeded {
            size: usize::MAX,
            cap: ORACLE_CAP,
        });
    }
    let basis: Vec<usize> = (0..full as usize).filter(|&x| keep(&digits(x, d, n))).collect();
    let m = basis.len();
    if m > ORACLE_CAP {
        return Err(TnError::CapExceeded { size: m, cap: ORACLE_CAP });
    }
    let index = |x: usize| basis.binary_search(&x).ok();
    let mut h = vec![C64::new(0.0, 0.0); m * m];
    for (j, &x) in basis.iter().enumerate() {
        let c = digits(x, d, n);
        match spec {
            ModelSpec::Ising(s) => {
                // spin up is digit 0 with σz = +1
                let diag: f64 = c.iter().map(|&b| if b == 0 { s.lambda } else { -s.lambda }).sum();
                h[j + m * j] += C64::new(diag, 0.0);
                for b in 0..bonds(n, s.pbc) {
                    let y = x ^ (1 << b) ^ (1 << ((b + 1) % n));
                    if let Some(i) = index(y) {
                        h[i + m * j] -= C64::new(1.0, 0.0);
                    }
                }
            }
            ModelSpec::BoseHubbard(s) => {
                let mut diag = s.beta * c[s.s_b] as f64;
                for &k in &c {
                    diag += 0.5 * s.u * (k as f64) * (k as f64 - 1.0);
                }
                h[j + m * j] += C64::new(diag, 0.0);
                let phase = C64::from_polar(1.0, -2.0 * PI * s.omega / n as f64);
                for b in 0..bonds(n, s.pbc) {
                    let (p, q) = (b, (b + 1) % n);
                    // b†_p b_q with amplitude −t·phase, and its conjugate
                    for (from, to, amp) in [(q, p, -s.t * phase), (p, q, -s.t * phase.conj())] {
                        if c[from] == 0 || c[to] + 1 >= d {
                            continue;
                        }
                        let mut c2 = c.clone();
                        let f = ((c[from] as f64) * (c[to] as f64 + 1.0)).sqrt();
                        c2[from] -= 1;
                        c2[to] += 1;
                        if let Some(i) = index(undigits(&c2, d)) {
                            h[i + m * j] += amp * f;
                        }
                    }
                }
            }
        }
    }
    let (energies, vecs) = kernel::eigh(&h, m)?;
    let states = (0..m).map(|k| vecs[k * m..(k + 1) * m].to_vec()).collect();
    Ok(Spectrum {
        energies,
        states,
        basis,
        full_dim: full as usize,
    })
}

#[cfg(test)]
mod tests;
