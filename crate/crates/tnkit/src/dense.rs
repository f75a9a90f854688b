//! Dense complex tensors stored in column-major order.
//!
//! Link positions and element indices passed to the operations are 0-based.
//! [`offset`] and [`DenseTensor::at`] take the conventional 1-based
//! multi-index `(i_1, .., i_n)`.

use crate::error::{Result, TnError};
use crate::kernel;
use crate::C64;
use rand::Rng;
use rand_distr::StandardNormal;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Singular values below this are treated as exact zeros.
pub const ZERO_CUT: f64 = 1e-300;

/// 0-based offset of a 1-based multi-index in column-major storage.
pub fn offset(indices: &[usize], dims: &[usize]) -> Result<usize> {
    if indices.len() != dims.len() {
        return Err(TnError::RankMismatch {
            expected: dims.len(),
            got: indices.len(),
        });
    }
    let mut off = 0;
    let mut stride = 1;
    for (r, (&i, &d)) in indices.iter().zip(dims).enumerate() {
        if i < 1 || i > d {
            return Err(TnError::IndexOutOfRange {
                link: r,
                index: i,
                dim: d,
            });
        }
        off += (i - 1) * stride;
        stride *= d;
    }
    Ok(off)
}

/// Offset of a 0-based multi-index; no bounds checks.
pub(crate) fn offset0(indices: &[usize], dims: &[usize]) -> usize {
    let mut off = 0;
    let mut stride = 1;
    for (&i, &d) in indices.iter().zip(dims) {
        off += i * stride;
        stride *= d;
    }
    off
}

pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(dims.len());
    let mut acc = 1;
    for &d in dims {
        s.push(acc);
        acc *= d;
    }
    s
}

/// Rules for cutting a descending spectrum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncation {
    pub max_dim: Option<usize>,
    /// Values below `rel_threshold * max` are dropped.
    pub rel_threshold: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            max_dim: None,
            rel_threshold: 1e-14,
        }
    }
}

impl Truncation {
    pub fn none() -> Self {
        Truncation {
            max_dim: None,
            rel_threshold: 0.0,
        }
    }
    pub fn max_dim(chi: usize) -> Self {
        Truncation {
            max_dim: Some(chi),
            ..Default::default()
        }
    }

    /// Number of leading values of a descending list to keep. At least one
    /// value survives so that links never vanish.
    pub fn kept(&self, sorted: &[f64]) -> usize {
        if sorted.is_empty() {
            return 0;
        }
        let vmax = sorted[0];
        let cut = self.rel_threshold * vmax;
        let mut n = sorted
            .iter()
            .take_while(|&&v| v >= cut && v > ZERO_CUT)
            .count();
        if let Some(chi) = self.max_dim {
            n = n.min(chi);
        }
        n.max(1)
    }
}

/// Descending singular values kept by a truncated SVD.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularSpectrum {
    pub values: Vec<f64>,
    pub discarded_weight: f64,
    pub kept_norm: f64,
}

impl SingularSpectrum {
    pub fn from_split(all: &[f64], kept: usize) -> Self {
        let discarded_weight = all[kept..].iter().map(|v| v * v).sum();
        let kept_norm = all[..kept].iter().map(|v| v * v).sum::<f64>().sqrt();
        SingularSpectrum {
            values: all[..kept].to_vec(),
            discarded_weight,
            kept_norm,
        }
    }

    /// `sqrt` of the discarded weight, i.e. the Frobenius reconstruction error.
    pub fn truncation_error(&self) -> f64 {
        self.discarded_weight.sqrt()
    }
}

/// How [`expm_pair`] evaluates `exp(A ⊗ B)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpMethod {
    Exact,
    /// Truncated series over a shared link of dimension `n + 1`. Only
    /// reliable for `‖A ⊗ B‖ ≲ 1`.
    Taylor(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<C64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(TnError::DimMismatch(format!(
                "dims {dims:?} need {n} elements, got {}",
                data.len()
            )));
        }
        Ok(DenseTensor { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        DenseTensor {
            dims: dims.to_vec(),
            data: vec![ZERO; n],
        }
    }

    pub fn scalar(c: C64) -> Self {
        DenseTensor {
            dims: vec![],
            data: vec![c],
        }
    }

    pub fn from_real(dims: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(
            dims.to_vec(),
            values.iter().map(|&v| C64::new(v, 0.0)).collect(),
        )
    }

    /// Two-link identity of dimension `d`.
    pub fn identity(d: usize) -> Self {
        DenseTensor {
            dims: vec![d, d],
            data: kernel::identity(d),
        }
    }

    /// Entries drawn from the standard complex normal distribution.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        let n: usize = dims.iter().product();
        let data = (0..n)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            })
            .collect();
        DenseTensor {
            dims: dims.to_vec(),
            data,
        }
    }

    pub fn random_real<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        let n: usize = dims.iter().product();
        let data = (0..n)
            .map(|_| C64::new(rng.sample(StandardNormal), 0.0))
            .collect();
        DenseTensor {
            dims: dims.to_vec(),
            data,
        }
    }

    // Builds an `m x n` matrix from column-major data.
    pub fn matrix(m: usize, n: usize, data: Vec<C64>) -> Result<Self> {
        Self::new(vec![m, n], data)
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn data(&self) -> &[C64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    /// Element at a 1-based multi-index.
    pub fn at(&self, indices: &[usize]) -> Result<C64> {
        Ok(self.data[offset(indices, &self.dims)?])
    }

    pub fn set_at(&mut self, indices: &[usize], v: C64) -> Result<()> {
        let o = offset(indices, &self.dims)?;
        self.data[o] = v;
        Ok(())
    }

    pub fn scalar_value(&self) -> Option<C64> {
        if self.data.len() == 1 && self.dims.iter().all(|&d| d == 1) {
            Some(self.data[0])
        } else {
            None
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        DenseTensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn scale_mut(&mut self, c: C64) {
        for v in self.data.iter_mut() {
            *v *= c;
        }
    }

    pub fn conj(&self) -> Self {
        DenseTensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| v.conj()).collect(),
        }
    }

    /// `self += c * other` for tensors of identical shape.
    pub fn axpy(&mut self, c: C64, other: &DenseTensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(TnError::DimMismatch(format!(
                "axpy {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// `max |self - other|`, or infinity when the shapes differ.
    pub fn max_abs_diff(&self, other: &DenseTensor) -> f64 {
        if self.dims != other.dims {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    /// Sesquilinear overlap `Σ conj(self) * other` over identical shapes.
    pub fn dot(&self, other: &DenseTensor) -> C64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Moves old link `l` to position `sigma[l]`.
    pub fn permute(&self, sigma: &[usize]) -> Result<Self> {
        let n = self.rank();
        if sigma.len() != n {
            return Err(TnError::RankMismatch {
                expected: n,
                got: sigma.len(),
            });
        }
        let inv = invert_permutation(sigma)?;
        if sigma.iter().enumerate().all(|(i, &s)| i == s) {
            return Ok(self.clone());
        }
        let in_strides = strides(&self.dims);
        let new_dims: Vec<usize> = inv.iter().map(|&l| self.dims[l]).collect();
        let st: Vec<usize> = inv.iter().map(|&l| in_strides[l]).collect();
        let data = strided_copy(&self.data, &new_dims, &st);
        Ok(DenseTensor {
            dims: new_dims,
            data,
        })
    }

    /// Replaces links `k..=m` by a single link. No data movement.
    pub fn fuse(&self, k: usize, m: usize) -> Result<Self> {
        if self.rank() == 0 {
            return Err(TnError::ScalarOperation("fuse"));
        }
        if k > m || m >= self.rank() {
            return Err(TnError::InvalidRange(format!(
                "fuse {k}..={m} on rank {}",
                self.rank()
            )));
        }
        let mut dims = self.dims[..k].to_vec();
        dims.push(self.dims[k..=m].iter().product());
        dims.extend_from_slice(&self.dims[m + 1..]);
        Ok(DenseTensor {
            dims,
            data: self.data.clone(),
        })
    }

    /// Splits link `pos` into `new_dims` (which may contain dummy 1s).
    pub fn split(&self, pos: usize, new_dims: &[usize]) -> Result<Self> {
        if self.rank() == 0 {
            return Err(TnError::ScalarOperation("split"));
        }
        if pos >= self.rank() {
            return Err(TnError::InvalidRange(format!("split at {pos}")));
        }
        if new_dims.iter().product::<usize>() != self.dims[pos] || new_dims.is_empty() {
            return Err(TnError::DimMismatch(format!(
                "cannot split {} into {new_dims:?}",
                self.dims[pos]
            )));
        }
        let mut dims = self.dims[..pos].to_vec();
        dims.extend_from_slice(new_dims);
        dims.extend_from_slice(&self.dims[pos + 1..]);
        Ok(DenseTensor {
            dims,
            data: self.data.clone(),
        })
    }

    /// Reshape to arbitrary dims with the same element count.
    pub fn reshape(&self, dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), self.data.clone())
    }

    /// Subtensor on the ordered index subsets `keep[r]` of each link.
    pub fn subtensor_read(&self, keep: &[Vec<usize>]) -> Result<Self> {
        if keep.len() != self.rank() {
            return Err(TnError::RankMismatch {
                expected: self.rank(),
                got: keep.len(),
            });
        }
        for (r, k) in keep.iter().enumerate() {
            if k.is_empty() {
                return Err(TnError::InvalidRange(format!("empty subset on link {r}")));
            }
            if let Some(&bad) = k.iter().find(|&&i| i >= self.dims[r]) {
                return Err(TnError::IndexOutOfRange {
                    link: r,
                    index: bad,
                    dim: self.dims[r],
                });
            }
        }
        let dims: Vec<usize> = keep.iter().map(|k| k.len()).collect();
        let st = strides(&self.dims);
        let total: usize = dims.iter().product();
        let mut data = Vec::with_capacity(total);
        for_each_index(&dims, |idx| {
            let o: usize = idx
                .iter()
                .enumerate()
                .map(|(r, &j)| keep[r][j] * st[r])
                .sum();
            data.push(self.data[o]);
        });
        Ok(DenseTensor { dims, data })
    }

    /// Copy of `self` with `s` written at the positions `maps[r][j]`.
    pub fn subtensor_assign(&self, s: &DenseTensor, maps: &[Vec<usize>]) -> Result<Self> {
        let mut out = self.clone();
        out.subtensor_assign_mut(s, maps)?;
        Ok(out)
    }

    pub fn subtensor_assign_mut(&mut self, s: &DenseTensor, maps: &[Vec<usize>]) -> Result<()> {
        if maps.len() != self.rank() || s.rank() != self.rank() {
            return Err(TnError::RankMismatch {
                expected: self.rank(),
                got: maps.len(),
            });
        }
        for (r, m) in maps.iter().enumerate() {
            if m.len() != s.dims[r] {
                return Err(TnError::DimMismatch(format!(
                    "map on link {r} has {} entries, source dim {}",
                    m.len(),
                    s.dims[r]
                )));
            }
            let mut seen = vec![false; self.dims[r]];
            for &i in m {
                if i >= self.dims[r] {
                    return Err(TnError::IndexOutOfRange {
                        link: r,
                        index: i,
                        dim: self.dims[r],
                    });
                }
                if seen[i] {
                    return Err(TnError::NotInjective(r));
                }
                seen[i] = true;
            }
        }
        let st = strides(&self.dims);
        let mut src = 0;
        let data = &mut self.data;
        for_each_index(&s.dims, |idx| {
            let o: usize = idx
                .iter()
                .enumerate()
                .map(|(r, &j)| maps[r][j] * st[r])
                .sum();
            data[o] = s.data[src];
            src += 1;
        });
        Ok(())
    }

    /// Contracts `self` with `other` over `(link in self, link in other)`
    /// pairs. Result links: remaining links of `self`, then of `other`.
    pub fn contract(&self, other: &DenseTensor, pairs: &[(usize, usize)]) -> Result<Self> {
        contract_impl(self, false, other, pairs)
    }

    /// Like [`contract`](Self::contract) with `self` complex-conjugated.
    pub fn contract_conj(&self, other: &DenseTensor, pairs: &[(usize, usize)]) -> Result<Self> {
        contract_impl(self, true, other, pairs)
    }

    /// Scales every slice along `link` by the matching weight.
    pub fn contract_diagonal(&self, weights: &[C64], link: usize) -> Result<Self> {
        if link >= self.rank() {
            return Err(TnError::InvalidRange(format!("link {link}")));
        }
        if weights.len() != self.dims[link] {
            return Err(TnError::DimMismatch(format!(
                "{} weights on link of dim {}",
                weights.len(),
                self.dims[link]
            )));
        }
        let inner: usize = self.dims[..link].iter().product();
        let d = self.dims[link];
        let mut out = self.clone();
        for (chunk_idx, chunk) in out.data.chunks_mut(inner).enumerate() {
            let w = weights[chunk_idx % d];
            for v in chunk.iter_mut() {
                *v *= w;
            }
        }
        Ok(out)
    }

    pub fn contract_diagonal_real(&self, weights: &[f64], link: usize) -> Result<Self> {
        let w: Vec<C64> = weights.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.contract_diagonal(&w, link)
    }

    /// Traces over pairs of links of equal dimension.
    pub fn partial_trace(&self, pairs: &[(usize, usize)]) -> Result<Self> {
        let n = self.rank();
        let mut used = vec![false; n];
        for &(a, b) in pairs {
            if a >= n || b >= n || a == b || used[a] || used[b] {
                return Err(TnError::InvalidRange(format!("trace pair ({a},{b})")));
            }
            if self.dims[a] != self.dims[b] {
                return Err(TnError::DimMismatch(format!(
                    "trace pair ({a},{b}) dims {} vs {}",
                    self.dims[a], self.dims[b]
                )));
            }
            used[a] = true;
            used[b] = true;
        }
        let rest: Vec<usize> = (0..n).filter(|&l| !used[l]).collect();
        let st = strides(&self.dims);
        let rest_dims: Vec<usize> = rest.iter().map(|&l| self.dims[l]).collect();
        let pair_dims: Vec<usize> = pairs.iter().map(|&(a, _)| self.dims[a]).collect();
        let pair_st: Vec<usize> = pairs.iter().map(|&(a, b)| st[a] + st[b]).collect();
        let mut data = Vec::with_capacity(rest_dims.iter().product());
        for_each_index(&rest_dims, |ridx| {
            let base: usize = ridx.iter().zip(&rest).map(|(&i, &l)| i * st[l]).sum();
            let mut acc = ZERO;
            for_each_index(&pair_dims, |pidx| {
                let o: usize = base + pidx.iter().zip(&pair_st).map(|(&i, &s)| i * s).sum::<usize>();
                acc += self.data[o];
            });
            data.push(acc);
        });
        Ok(DenseTensor {
            dims: rest_dims,
            data,
        })
    }

    fn matrix_shape(&self, split: usize) -> Result<(usize, usize)> {
        if split == 0 || split >= self.rank() {
            return Err(TnError::InvalidRange(format!(
                "bipartition at {split} of rank {}",
                self.rank()
            )));
        }
        Ok((
            self.dims[..split].iter().product(),
            self.dims[split..].iter().product(),
        ))
    }

    /// QR over the bipartition `(links[..split] | links[split..])`. `Q` gets
    /// the new link last, `R` first.
    pub fn qr(&self, split: usize) -> Result<(DenseTensor, DenseTensor)> {
        let (m, n) = self.matrix_shape(split)?;
        let (q, r, k) = kernel::qr(&self.data, m, n);
        let mut qd = self.dims[..split].to_vec();
        qd.push(k);
        let mut rd = vec![k];
        rd.extend_from_slice(&self.dims[split..]);
        Ok((
            DenseTensor { dims: qd, data: q },
            DenseTensor { dims: rd, data: r },
        ))
    }

    /// Truncated SVD over `(links[..split] | links[split..])`: `U` carries the
    /// new link last, `Vh` first.
    pub fn svd(
        &self,
        split: usize,
        trunc: &Truncation,
    ) -> Result<(DenseTensor, SingularSpectrum, DenseTensor)> {
        if trunc.max_dim == Some(0) {
            return Err(TnError::Config("truncation to zero dimension".into()));
        }
        let (m, n) = self.matrix_shape(split)?;
        let (u, s, vh) = kernel::svd(&self.data, m, n)?;
        let k = s.len();
        let kept = trunc.kept(&s);
        let spec = SingularSpectrum::from_split(&s, kept);
        let u = u[..m * kept].to_vec();
        let mut vt = Vec::with_capacity(kept * n);
        for c in 0..n {
            vt.extend_from_slice(&vh[c * k..c * k + kept]);
        }
        let mut ud = self.dims[..split].to_vec();
        ud.push(kept);
        let mut vd = vec![kept];
        vd.extend_from_slice(&self.dims[split..]);
        Ok((
            DenseTensor { dims: ud, data: u },
            spec,
            DenseTensor { dims: vd, data: vt },
        ))
    }

    /// Serialized record: `TNK1`, u8 rank, u64 dims, then (re, im) pairs,
    /// little-endian.
    pub fn to_record(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + 8 * self.rank() + 16 * self.len());
        self.write_record(&mut out);
        out
    }

    pub fn write_record(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(b"TNK1");
        out.push(self.rank() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
    }

    /// Parses a record, returning the tensor and the bytes consumed.
    pub fn from_record(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut r = crate::io::Reader::new(bytes);
        let t = Self::read_record(&mut r)?;
        Ok((t, r.position()))
    }

    pub(crate) fn read_record(r: &mut crate::io::Reader<'_>) -> Result<Self> {
        r.expect_magic(b"TNK1")?;
        let rank = r.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u64()? as usize);
        }
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let re = r.f64()?;
            let im = r.f64()?;
            data.push(C64::new(re, im));
        }
        Ok(DenseTensor { dims, data })
    }
}

pub fn invert_permutation(sigma: &[usize]) -> Result<Vec<usize>> {
    let n = sigma.len();
    let mut inv = vec![usize::MAX; n];
    for (l, &s) in sigma.iter().enumerate() {
        if s >= n || inv[s] != usize::MAX {
            return Err(TnError::BadPermutation(sigma.to_vec()));
        }
        inv[s] = l;
    }
    Ok(inv)
}

/// Visits every multi-index of `dims` in column-major order.
pub(crate) fn for_each_index(dims: &[usize], mut f: impl FnMut(&[usize])) {
    if dims.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; dims.len()];
    loop {
        f(&idx);
        let mut r = 0;
        loop {
            if r == dims.len() {
                return;
            }
            idx[r] += 1;
            if idx[r] < dims[r] {
                break;
            }
            idx[r] = 0;
            r += 1;
        }
    }
}

/// Gathers `src` into a fresh column-major buffer of shape `dims`, where
/// output axis `k` advances the source by `st[k]`.
fn strided_copy(src: &[C64], dims: &[usize], st: &[usize]) -> Vec<C64> {
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    if total == 0 {
        return out;
    }
    let n = dims.len();
    let d0 = dims[0];
    let s0 = st[0];
    let mut idx = vec![0usize; n];
    let mut base = 0usize;
    loop {
        if s0 == 1 {
            out.extend_from_slice(&src[base..base + d0]);
        } else {
            let mut o = base;
            for _ in 0..d0 {
                out.push(src[o]);
                o += s0;
            }
        }
        let mut r = 1;
        loop {
            if r >= n {
                return out;
            }
            idx[r] += 1;
            base += st[r];
            if idx[r] < dims[r] {
                break;
            }
            base -= st[r] * dims[r];
            idx[r] = 0;
            r += 1;
        }
    }
}

fn contract_impl(
    a: &DenseTensor,
    conj_a: bool,
    b: &DenseTensor,
    pairs: &[(usize, usize)],
) -> Result<DenseTensor> {
    let (na, nb) = (a.rank(), b.rank());
    let mut in_a = vec![usize::MAX; na];
    let mut in_b = vec![usize::MAX; nb];
    for (p, &(x, y)) in pairs.iter().enumerate() {
        if x >= na || y >= nb || in_a[x] != usize::MAX || in_b[y] != usize::MAX {
            return Err(TnError::InvalidRange(format!("contraction pair ({x},{y})")));
        }
        if a.dims[x] != b.dims[y] {
            return Err(TnError::DimMismatch(format!(
                "pair ({x},{y}): {} vs {}",
                a.dims[x], b.dims[y]
            )));
        }
        in_a[x] = p;
        in_b[y] = p;
    }
    let a_free: Vec<usize> = (0..na).filter(|&l| in_a[l] == usize::MAX).collect();
    let b_free: Vec<usize> = (0..nb).filter(|&l| in_b[l] == usize::MAX).collect();
    let a_sh: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let b_sh: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let m: usize = a_free.iter().map(|&l| a.dims[l]).product();
    let k: usize = a_sh.iter().map(|&l| a.dims[l]).product();
    let n: usize = b_free.iter().map(|&l| b.dims[l]).product();

    // A as (free x shared) or transposed (shared x free), whichever avoids a
    // permutation; otherwise permute into (free, shared).
    let order_fs: Vec<usize> = a_free.iter().chain(&a_sh).copied().collect();
    let order_sf: Vec<usize> = a_sh.iter().chain(&a_free).copied().collect();
    let a_owned;
    let (a_data, trans_a): (&[C64], bool) = if is_identity(&order_fs) {
        (&a.data, false)
    } else if is_identity(&order_sf) {
        (&a.data, true)
    } else {
        a_owned = a.permute(&positions_of(&order_fs))?;
        (&a_owned.data, false)
    };
    let a_conj;
    let a_data = if conj_a {
        a_conj = a_data.iter().map(|v| v.conj()).collect::<Vec<_>>();
        &a_conj[..]
    } else {
        a_data
    };
    let order_sf_b: Vec<usize> = b_sh.iter().chain(&b_free).copied().collect();
    let order_fs_b: Vec<usize> = b_free.iter().chain(&b_sh).copied().collect();
    let b_owned;
    let (b_data, trans_b): (&[C64], bool) = if is_identity(&order_sf_b) {
        (&b.data, false)
    } else if is_identity(&order_fs_b) {
        (&b.data, true)
    } else {
        b_owned = b.permute(&positions_of(&order_sf_b))?;
        (&b_owned.data, false)
    };
    let (ar, ac) = if trans_a { (k, m) } else { (m, k) };
    let (br, bc) = if trans_b { (n, k) } else { (k, n) };
    let data = kernel::gemm(a_data, ar, ac, trans_a, b_data, br, bc, trans_b);
    let dims: Vec<usize> = a_free
        .iter()
        .map(|&l| a.dims[l])
        .chain(b_free.iter().map(|&l| b.dims[l]))
        .collect();
    Ok(DenseTensor { dims, data })
}

fn is_identity(order: &[usize]) -> bool {
    order.iter().enumerate().all(|(i, &l)| i == l)
}

/// `order[new] = old` turned into `sigma[old] = new`.
pub(crate) fn positions_of(order: &[usize]) -> Vec<usize> {
    let mut sigma = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        sigma[old] = new;
    }
    sigma
}

/// `exp(A ⊗ B)` for square operators `A` (links `[out.., in..]`) and `B`.
/// Result links: `[A out.., B out.., A in.., B in..]`.
pub fn expm_pair(a: &DenseTensor, b: &DenseTensor, method: ExpMethod) -> Result<DenseTensor> {
    let ha = square_half(a)?;
    let hb = square_half(b)?;
    let da: usize = a.dims[..ha].iter().product();
    let db: usize = b.dims[..hb].iter().product();
    let out_dims: Vec<usize> = a.dims[..ha]
        .iter()
        .chain(&b.dims[..hb])
        .chain(&a.dims[ha..])
        .chain(&b.dims[hb..])
        .copied()
        .collect();
    match method {
        ExpMethod::Exact => {
            // direct product [A out, A in, B out, B in] -> [A out, B out, A in, B in]
            let ab = a.contract(b, &[])?;
            let ra = 2 * ha;
            let rb = 2 * hb;
            let mut order = Vec::with_capacity(ra + rb);
            order.extend(0..ha);
            order.extend(ra..ra + hb);
            order.extend(ha..ra);
            order.extend(ra + hb..ra + rb);
            let m = ab.permute(&positions_of(&order))?;
            let e = kernel::expm(&m.data, da * db);
            DenseTensor::new(out_dims, e)
        }
        ExpMethod::Taylor(order_n) => {
            let ma = a.reshape(&[da, da])?;
            let mb = b.reshape(&[db, db])?;
            // Aprime[.., k] = A^k / sqrt(k!), Bprime[k, ..] likewise.
            let mut ap = Vec::with_capacity(da * da * (order_n + 1));
            let mut bp = vec![ZERO; (order_n + 1) * db * db];
            let mut pa = kernel::identity(da);
            let mut pb = kernel::identity(db);
            let mut fact = 1.0f64;
            for kk in 0..=order_n {
                if kk > 0 {
                    pa = kernel::gemm(&pa, da, da, false, &ma.data, da, da, false);
                    pb = kernel::gemm(&pb, db, db, false, &mb.data, db, db, false);
                    fact *= kk as f64;
                }
                let w = 1.0 / fact.sqrt();
                ap.extend(pa.iter().map(|v| v * w));
                for (e, v) in pb.iter().enumerate() {
                    bp[kk + e * (order_n + 1)] = v * w;
                }
            }
            let at = DenseTensor::new(vec![da, da, order_n + 1], ap)?;
            let bt = DenseTensor::new(vec![order_n + 1, db, db], bp)?;
            // [a_out, a_in, b_out, b_in]
            let c = at.contract(&bt, &[(2, 0)])?;
            let c = c.permute(&[0, 2, 1, 3])?;
            DenseTensor::new(out_dims, c.data)
        }
    }
}

fn square_half(t: &DenseTensor) -> Result<usize> {
    let r = t.rank();
    if r == 0 || !r.is_multiple_of(2) || t.dims[..r / 2] != t.dims[r / 2..] {
        return Err(TnError::DimMismatch(format!(
            "operator with dims {:?} is not square",
            t.dims
        )));
    }
    Ok(r / 2)
}

impl std::ops::Index<usize> for DenseTensor {
    type Output = C64;
    fn index(&self, o: usize) -> &C64 {
        &self.data[o]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ONE: C64 = C64::new(1.0, 0.0);

    fn fig2() -> DenseTensor {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let b = (2.0f64 / 3.0).sqrt();
        let c = (1.0f64 / 3.0).sqrt();
        DenseTensor::from_real(
            &[3, 2, 2],
            &[a, 0.0, 0.0, 0.0, 0.0, b, 0.0, 0.0, c, -a, 1.0, 0.0],
        )
        .unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    // Independent oracle: direct index loop over all output/summed indices.
    fn naive_contract(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> DenseTensor {
        let a_free: Vec<usize> = (0..a.rank()).filter(|l| !pairs.iter().any(|p| p.0 == *l)).collect();
        let b_free: Vec<usize> = (0..b.rank()).filter(|l| !pairs.iter().any(|p| p.1 == *l)).collect();
        let out_dims: Vec<usize> = a_free
            .iter()
            .map(|&l| a.dims()[l])
            .chain(b_free.iter().map(|&l| b.dims()[l]))
            .collect();
        let sum_dims: Vec<usize> = pairs.iter().map(|p| a.dims()[p.0]).collect();
        let mut out = DenseTensor::zeros(&out_dims);
        let mut o = 0;
        for_each_index(&out_dims.clone(), |oi| {
            let mut acc = ZERO;
            for_each_index(&sum_dims, |si| {
                let mut ia = vec![0; a.rank()];
                let mut ib = vec![0; b.rank()];
                for (j, &l) in a_free.iter().enumerate() {
                    ia[l] = oi[j];
                }
                for (j, &l) in b_free.iter().enumerate() {
                    ib[l] = oi[a_free.len() + j];
                }
                for (p, &(x, y)) in pairs.iter().enumerate() {
                    ia[x] = si[p];
                    ib[y] = si[p];
                }
                let oa: Vec<usize> = ia.iter().map(|i| i + 1).collect();
                let ob: Vec<usize> = ib.iter().map(|i| i + 1).collect();
                acc += a.at(&oa).unwrap() * b.at(&ob).unwrap();
            });
            out.data_mut()[o] = acc;
            o += 1;
        });
        out
    }

    #[test]
    fn offsets_from_the_storage_table() {
        assert_eq!(offset(&[1, 1, 1], &[3, 2, 2]).unwrap(), 0);
        assert_eq!(offset(&[3, 2, 1], &[3, 2, 2]).unwrap(), 5);
        assert_eq!(offset(&[2, 2, 2], &[3, 2, 2]).unwrap(), 10);
        assert!(offset(&[4, 1, 1], &[3, 2, 2]).is_err());
        assert!(offset(&[0, 1, 1], &[3, 2, 2]).is_err());
    }

    #[test]
    fn offset_is_a_bijection() {
        let dims = [3, 2, 4];
        let mut seen = [false; 24];
        for_each_index(&dims, |i| {
            let one: Vec<usize> = i.iter().map(|x| x + 1).collect();
            let o = offset(&one, &dims).unwrap();
            assert!(!seen[o]);
            seen[o] = true;
        });
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn fuse_matches_matrix_and_vector_views() {
        let t = fig2();
        let m = t.fuse(1, 2).unwrap();
        assert_eq!(m.dims(), &[3, 4]);
        // M_{1,(2,1)} = 0 and M_{3,(1,2)} = 1/sqrt(3); fused column j = 1 + offset
        let col = |i2: usize, i3: usize| 1 + offset(&[i2, i3], &[2, 2]).unwrap();
        assert_eq!(m.at(&[1, col(2, 1)]).unwrap(), ZERO);
        assert!((m.at(&[3, col(1, 2)]).unwrap().re - (1.0f64 / 3.0).sqrt()).abs() < 1e-16);
        let v = t.fuse(0, 2).unwrap();
        assert_eq!(v.dims(), &[12]);
        assert!((v.at(&[1]).unwrap().re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-16);
        assert!((v.at(&[10]).unwrap().re + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-16);
        assert_eq!(t.fuse(1, 1).unwrap(), t);
    }

    #[test]
    fn split_inverts_fuse_and_inserts_dummies() {
        let t = fig2();
        assert_eq!(t.fuse(1, 2).unwrap().split(1, &[2, 2]).unwrap(), t);
        let d = t.split(0, &[3, 1]).unwrap();
        assert_eq!(d.rank(), 4);
        assert_eq!(d.len(), t.len());
        let v = DenseTensor::random(&[12], &mut rng(1));
        assert_eq!(v.split(0, &[3, 4]).unwrap().fuse(0, 1).unwrap(), v);
        assert!(t.split(0, &[2, 2]).is_err());
        assert!(DenseTensor::scalar(ONE).fuse(0, 0).is_err());
    }

    #[test]
    fn permute_transposes_matrices() {
        let m = fig2().fuse(1, 2).unwrap();
        let mt = m.permute(&[1, 0]).unwrap();
        for a in 1..=3 {
            for b in 1..=4 {
                assert_eq!(mt.at(&[b, a]).unwrap(), m.at(&[a, b]).unwrap());
            }
        }
        assert_eq!(m.permute(&[0, 1]).unwrap(), m);
        assert!(m.permute(&[0, 0]).is_err());
    }

    #[test]
    fn permute_rank_four_spot_check() {
        let t = DenseTensor::random(&[2, 3, 4, 2], &mut rng(2));
        let p = t.permute(&[1, 2, 0, 3]).unwrap();
        assert_eq!(p.dims(), &[4, 2, 3, 2]);
        for_each_index(t.dims(), |i| {
            let (a, b, c, d) = (i[0] + 1, i[1] + 1, i[2] + 1, i[3] + 1);
            assert_eq!(p.at(&[c, a, b, d]).unwrap(), t.at(&[a, b, c, d]).unwrap());
        });
    }

    #[test]
    fn subtensor_read_rows() {
        let s = fig2().subtensor_read(&[vec![2], vec![0, 1], vec![0, 1]]).unwrap();
        assert_eq!(s.dims(), &[1, 2, 2]);
        let b = (2.0f64 / 3.0).sqrt();
        let c = (1.0f64 / 3.0).sqrt();
        let want = DenseTensor::from_real(&[1, 2, 2], &[0.0, b, c, 0.0]).unwrap();
        assert!(s.max_abs_diff(&want) < 1e-16);
        let full: Vec<Vec<usize>> = fig2().dims().iter().map(|&d| (0..d).collect()).collect();
        assert_eq!(fig2().subtensor_read(&full).unwrap(), fig2());
    }

    #[test]
    fn subtensor_assign_round_trip_and_padding() {
        let mut r = rng(3);
        let t = DenseTensor::random(&[4, 3, 2], &mut r);
        let s = DenseTensor::random(&[2, 2, 1], &mut r);
        let maps = vec![vec![3, 0], vec![1, 2], vec![1]];
        let u = t.subtensor_assign(&s, &maps).unwrap();
        assert_eq!(u.subtensor_read(&maps).unwrap(), s);
        let z = t.subtensor_assign(&DenseTensor::zeros(&[2, 2, 1]), &maps).unwrap();
        assert_eq!(z.subtensor_read(&maps).unwrap(), DenseTensor::zeros(&[2, 2, 1]));
        assert!(t.subtensor_assign(&s, &[vec![0, 0], vec![1, 2], vec![1]]).is_err());
        // pad a D=2 link to D=3 with zeros
        let small = DenseTensor::random(&[2, 3], &mut r);
        let pad = DenseTensor::zeros(&[3, 3])
            .subtensor_assign(&small, &[vec![0, 1], vec![0, 1, 2]])
            .unwrap();
        assert!((pad.norm() - small.norm()).abs() < 1e-14);
    }

    #[test]
    fn contraction_basics() {
        let mut r = rng(4);
        let t = DenseTensor::random(&[3, 4, 2], &mut r);
        let id = DenseTensor::identity(4);
        let c = t.contract(&id, &[(1, 0)]).unwrap();
        assert!(c.permute(&[0, 2, 1]).unwrap().max_abs_diff(&t) < 1e-15);
        let a = DenseTensor::random(&[2, 2], &mut r);
        let b = DenseTensor::random(&[3, 3], &mut r);
        let k = a.contract(&b, &[]).unwrap();
        for_each_index(&[2, 2, 3, 3], |i| {
            let v = k.at(&[i[0] + 1, i[1] + 1, i[2] + 1, i[3] + 1]).unwrap();
            let w = a.at(&[i[0] + 1, i[1] + 1]).unwrap() * b.at(&[i[2] + 1, i[3] + 1]).unwrap();
            assert!((v - w).norm() < 1e-15);
        });
        let s = DenseTensor::scalar(C64::new(2.0, 1.0))
            .contract(&DenseTensor::scalar(C64::new(0.0, 1.0)), &[])
            .unwrap();
        assert_eq!(s.scalar_value(), Some(C64::new(-1.0, 2.0)));
        assert!(t.contract(&id, &[(0, 0)]).is_err());
    }

    #[test]
    fn contraction_against_loop_oracle() {
        let mut r = rng(5);
        let a = DenseTensor::random(&[3, 2, 4], &mut r);
        let b = DenseTensor::random(&[4, 5, 3], &mut r);
        for pairs in [vec![(0, 2), (2, 0)], vec![(2, 0), (0, 2)], vec![(2, 0)], vec![]] {
            let c = a.contract(&b, &pairs).unwrap();
            let o = naive_contract(&a, &b, &pairs);
            assert!(c.max_abs_diff(&o) < 1e-12 * a.norm() * b.norm());
        }
        let cc = a.contract_conj(&b, &[(2, 0)]).unwrap();
        assert!(cc.max_abs_diff(&naive_contract(&a.conj(), &b, &[(2, 0)])) < 1e-12);
    }

    #[test]
    fn diagonal_contraction() {
        let mut r = rng(6);
        let t = DenseTensor::random(&[3, 4, 2], &mut r);
        assert_eq!(t.contract_diagonal_real(&[1.0; 4], 1).unwrap(), t);
        let z = t.contract_diagonal_real(&[1.0, 0.0, 1.0, 1.0], 1).unwrap();
        let slice = z.subtensor_read(&[vec![0, 1, 2], vec![1], vec![0, 1]]).unwrap();
        assert_eq!(slice.norm(), 0.0);
        let w: Vec<C64> = (0..4).map(|i| C64::new(i as f64, 0.5)).collect();
        let mut diag = DenseTensor::zeros(&[4, 4]);
        for i in 0..4 {
            diag.set_at(&[i + 1, i + 1], w[i]).unwrap();
        }
        let full = t.contract(&diag, &[(1, 0)]).unwrap().permute(&[0, 2, 1]).unwrap();
        assert!(t.contract_diagonal(&w, 1).unwrap().max_abs_diff(&full) < 1e-14);
    }

    #[test]
    fn traces() {
        let id = DenseTensor::identity(5);
        assert_eq!(id.partial_trace(&[(0, 1)]).unwrap().scalar_value(), Some(C64::new(5.0, 0.0)));
        let m = fig2().fuse(1, 2).unwrap();
        let mtm = m.contract_conj(&m, &[(0, 0)]).unwrap();
        let tr = mtm.partial_trace(&[(0, 1)]).unwrap().scalar_value().unwrap();
        assert!((tr.re - 3.0).abs() < 1e-14);
        let mut r = rng(7);
        let t = DenseTensor::random(&[2, 3, 2, 3], &mut r);
        let p = t.partial_trace(&[(1, 3)]).unwrap();
        let mut want = DenseTensor::zeros(&[2, 2]);
        for a in 1..=2 {
            for c in 1..=2 {
                let s: C64 = (1..=3).map(|b| t.at(&[a, b, c, b]).unwrap()).sum();
                want.set_at(&[a, c], s).unwrap();
            }
        }
        assert!(p.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn norms() {
        assert_eq!(DenseTensor::zeros(&[3, 2]).norm(), 0.0);
        assert!((fig2().norm() - 3f64.sqrt()).abs() < 1e-15);
        assert!((DenseTensor::scalar(C64::new(3.0, -4.0)).norm() - 5.0).abs() < 1e-15);
        let t = fig2();
        let full = t.contract_conj(&t, &[(0, 0), (1, 1), (2, 2)]).unwrap();
        assert!((full.scalar_value().unwrap().re - 3.0).abs() < 1e-14);
    }

    fn isometry_residual(q: &DenseTensor) -> f64 {
        let k = *q.dims().last().unwrap();
        let rows: usize = q.len() / k;
        let m = q.reshape(&[rows, k]).unwrap();
        let g = m.contract_conj(&m, &[(0, 0)]).unwrap();
        g.max_abs_diff(&DenseTensor::identity(k))
    }

    #[test]
    fn qr_on_the_storage_example_and_random() {
        let (q, r) = fig2().qr(1).unwrap();
        assert_eq!(q.dims(), &[3, 3]);
        assert_eq!(r.dims(), &[3, 2, 2]);
        assert!(q.contract(&r, &[(1, 0)]).unwrap().max_abs_diff(&fig2()) < 1e-14);
        let mut g = rng(8);
        let a = DenseTensor::random(&[4, 6], &mut g);
        let (q, r) = a.qr(1).unwrap();
        assert!(q.contract(&r, &[(1, 0)]).unwrap().max_abs_diff(&a) < 1e-12 * a.norm());
        assert!(isometry_residual(&q) < 1e-12);
        // isometric input keeps an isometric Q and a diagonal unitary R
        let (q2, r2) = q.qr(1).unwrap();
        assert!(isometry_residual(&q2) < 1e-12);
        assert!(r2.max_abs_diff(&DenseTensor::identity(4)) < 1e-12);
    }

    #[test]
    fn svd_examples() {
        let mut g = rng(9);
        let u = DenseTensor::random(&[4, 1], &mut g);
        let v = DenseTensor::random(&[1, 3], &mut g);
        let m = u.contract(&v, &[(1, 0)]).unwrap();
        let (_, s, _) = m.svd(1, &Truncation::default()).unwrap();
        assert_eq!(s.values.len(), 1);
        assert!((s.values[0] - u.norm() * v.norm()).abs() < 1e-12);

        let mm = fig2().fuse(1, 2).unwrap();
        let (_, s, _) = mm.svd(1, &Truncation::none()).unwrap();
        let total: f64 = s.values.iter().map(|x| x * x).sum();
        assert!((total - 3.0).abs() < 1e-13);
        // eigenvalues of M M^dagger
        let mmh = mm.contract_conj(&mm, &[(1, 1)]).unwrap().permute(&[1, 0]).unwrap();
        let (ev, _) = kernel::eigh(mmh.data(), 3).unwrap();
        let mut sq: Vec<f64> = s.values.iter().map(|x| x * x).collect();
        sq.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in sq.iter().zip(&ev) {
            assert!((a - b).abs() < 1e-13);
        }

        let d = DenseTensor::from_real(&[2, 2], &[3.0, 0.0, 0.0, 0.5]).unwrap();
        let (_, s, _) = d.svd(1, &Truncation::max_dim(1)).unwrap();
        assert_eq!(s.values, vec![3.0]);
        assert!((s.discarded_weight - 0.25).abs() < 1e-15);
        assert!(d.svd(1, &Truncation::max_dim(0)).is_err());
    }

    #[test]
    fn expm_pair_cases() {
        let mut g = rng(10);
        let a = DenseTensor::random(&[2, 2], &mut g);
        let z = DenseTensor::zeros(&[3, 3]);
        let e = expm_pair(&a, &z, ExpMethod::Exact).unwrap();
        let id = DenseTensor::identity(6).reshape(&[2, 3, 2, 3]).unwrap();
        assert!(e.max_abs_diff(&id) < 1e-14);

        let sz = DenseTensor::from_real(&[2, 2], &[1.0, 0.0, 0.0, -1.0]).unwrap();
        let e = expm_pair(&sz, &sz, ExpMethod::Exact).unwrap();
        let e1 = 1f64.exp();
        let want = [e1, 1.0 / e1, 1.0 / e1, e1];
        for (i, w) in want.iter().enumerate() {
            let (x, y) = (i % 2 + 1, i / 2 + 1);
            assert!((e.at(&[x, y, x, y]).unwrap().re - w).abs() < 1e-13);
        }
        assert!((e.norm_sqr() - want.iter().map(|w| w * w).sum::<f64>()).abs() < 1e-12);

        let mut a = DenseTensor::random(&[2, 2], &mut g);
        let mut b = DenseTensor::random(&[2, 2], &mut g);
        let (na, nb) = (a.norm(), b.norm());
        a.scale_mut(C64::new(1.0 / na, 0.0));
        b.scale_mut(C64::new(1.0 / nb, 0.0));
        let ex = expm_pair(&a, &b, ExpMethod::Exact).unwrap();
        let ty = expm_pair(&a, &b, ExpMethod::Taylor(12)).unwrap();
        assert!(ex.max_abs_diff(&ty) < 1e-9);
        assert!(expm_pair(&DenseTensor::zeros(&[2, 3]), &b, ExpMethod::Exact).is_err());
    }

    #[test]
    fn record_round_trip() {
        let t = DenseTensor::random(&[2, 3, 1], &mut rng(11));
        let rec = t.to_record();
        assert_eq!(&rec[..4], b"TNK1");
        assert_eq!(rec.len(), 4 + 1 + 3 * 8 + 6 * 16);
        let (back, used) = DenseTensor::from_record(&rec).unwrap();
        assert_eq!(back, t);
        assert_eq!(used, rec.len());
    }

    fn dims_strategy(max_rank: usize) -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..4, 1..=max_rank)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn permute_then_inverse_is_identity(dims in dims_strategy(5), seed in any::<u64>()) {
            let mut g = rng(seed);
            let t = DenseTensor::random(&dims, &mut g);
            let mut sigma: Vec<usize> = (0..dims.len()).collect();
            use rand::seq::SliceRandom;
            sigma.shuffle(&mut g);
            let inv = invert_permutation(&sigma).unwrap();
            prop_assert_eq!(t.permute(&sigma).unwrap().permute(&inv).unwrap(), t);
        }

        #[test]
        fn split_of_fuse_is_identity(dims in dims_strategy(5), seed in any::<u64>(), a in 0usize..5, b in 0usize..5) {
            let t = DenseTensor::random(&dims, &mut rng(seed));
            let (k, m) = (a.min(b) % dims.len(), a.max(b) % dims.len());
            let (k, m) = (k.min(m), k.max(m));
            let f = t.fuse(k, m).unwrap();
            prop_assert_eq!(f.split(k, &dims[k..=m]).unwrap(), t);
        }

        #[test]
        fn contract_matches_oracle(da in dims_strategy(3), db in dims_strategy(3), seed in any::<u64>()) {
            let mut g = rng(seed);
            let mut db = db;
            // share the first min(len) links pairwise when dims allow
            let mut pairs = vec![];
            let nb = db.len();
            for (i, d) in da.iter().enumerate() {
                if i < nb && i < 2 {
                    db[nb - 1 - i] = *d;
                    pairs.push((i, nb - 1 - i));
                }
            }
            let a = DenseTensor::random(&da, &mut g);
            let b = DenseTensor::random(&db, &mut g);
            let c = a.contract(&b, &pairs).unwrap();
            let o = naive_contract(&a, &b, &pairs);
            prop_assert!(c.max_abs_diff(&o) <= 1e-12 * a.norm() * b.norm());
        }

        #[test]
        fn decompositions_reconstruct(dims in dims_strategy(4), seed in any::<u64>()) {
            prop_assume!(dims.len() >= 2);
            let t = DenseTensor::random(&dims, &mut rng(seed));
            let split = 1 + (seed as usize) % (dims.len() - 1);
            let (q, r) = t.qr(split).unwrap();
            prop_assert!(q.contract(&r, &[(split, 0)]).unwrap().max_abs_diff(&t) <= 1e-12 * t.norm().max(1.0));
            prop_assert!(isometry_residual(&q) <= 1e-12);
            let (u, s, vh) = t.svd(split, &Truncation::none()).unwrap();
            let us = u.contract_diagonal_real(&s.values, split).unwrap();
            prop_assert!(us.contract(&vh, &[(split, 0)]).unwrap().max_abs_diff(&t) <= 1e-12 * t.norm().max(1.0));
            prop_assert!(isometry_residual(&u) <= 1e-12);
            prop_assert!(s.values.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn norm_equals_full_self_contraction(dims in dims_strategy(4), seed in any::<u64>()) {
            let t = DenseTensor::random(&dims, &mut rng(seed));
            let pairs: Vec<(usize, usize)> = (0..dims.len()).map(|l| (l, l)).collect();
            let v = t.contract_conj(&t, &pairs).unwrap().scalar_value().unwrap();
            prop_assert!((v.re - t.norm_sqr()).abs() <= 1e-12 * t.norm_sqr().max(1.0));
        }

        #[test]
        fn truncation_error_is_discarded_tail(seed in any::<u64>(), chi in 1usize..5) {
            let t = DenseTensor::random(&[5, 6], &mut rng(seed));
            let (u, s, vh) = t.svd(1, &Truncation::max_dim(chi)).unwrap();
            let approx = u.contract_diagonal_real(&s.values, 1).unwrap().contract(&vh, &[(1, 0)]).unwrap();
            let mut diff = approx.clone();
            diff.axpy(C64::new(-1.0, 0.0), &t).unwrap();
            prop_assert!((diff.norm_sqr() - s.discarded_weight).abs() <= 1e-10 * s.discarded_weight.max(1e-300) + 1e-13);
        }
    }
}
