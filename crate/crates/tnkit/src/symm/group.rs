//! Abelian groups, quantum numbers and link directions.

use crate::error::{Result, TnError};
use std::fmt;

/// Maximum number of factors in a product group.
pub const MAX_FACTORS: usize = 4;

/// A quantum number: one integer per group factor, unused slots zero.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Qn(pub [i64; MAX_FACTORS]);

impl Qn {
    pub const ZERO: Qn = Qn([0; MAX_FACTORS]);

    /// Single-component quantum number.
    pub fn of(v: i64) -> Qn {
        let mut q = [0; MAX_FACTORS];
        q[0] = v;
        Qn(q)
    }
}

impl fmt::Debug for Qn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let last = self.0.iter().rposition(|&v| v != 0).unwrap_or(0);
        if last == 0 {
            write!(f, "{}", self.0[0])
        } else {
            write!(f, "{:?}", &self.0[..=last])
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Debug, Hash)]
pub enum Factor {
    /// The one-element group; every label is 0.
    Trivial,
    /// Cyclic group of order n, labels `0..n`.
    Z(u32),
    /// Integer charges.
    U1,
    /// Rotations by rational angles `2π k / denom`, stored as `k mod denom`.
    Angle(u32),
}

impl Factor {
    fn fuse(self, a: i64, b: i64) -> i64 {
        match self {
            Factor::Trivial => 0,
            Factor::Z(n) | Factor::Angle(n) => (a + b).rem_euclid(n as i64),
            Factor::U1 => a + b,
        }
    }

    fn invert(self, a: i64) -> i64 {
        match self {
            Factor::Trivial => 0,
            Factor::Z(n) | Factor::Angle(n) => (-a).rem_euclid(n as i64),
            Factor::U1 => -a,
        }
    }

    fn valid(self, a: i64) -> bool {
        match self {
            Factor::Trivial => a == 0,
            Factor::Z(n) | Factor::Angle(n) => (0..n as i64).contains(&a),
            Factor::U1 => true,
        }
    }

    fn tag(self) -> (u8, u32) {
        match self {
            Factor::Trivial => (0, 0),
            Factor::Z(n) => (1, n),
            Factor::U1 => (2, 0),
            Factor::Angle(n) => (3, n),
        }
    }

    fn from_tag(tag: u8, n: u32) -> Result<Factor> {
        match (tag, n) {
            (0, _) => Ok(Factor::Trivial),
            (1, n) if n >= 1 => Ok(Factor::Z(n)),
            (2, _) => Ok(Factor::U1),
            (3, n) if n >= 1 => Ok(Factor::Angle(n)),
            _ => Err(TnError::Format(format!("unknown group factor tag {tag}/{n}"))),
        }
    }
}

/// An Abelian group, possibly a direct product of up to [`MAX_FACTORS`]
/// simple factors.
#[derive(Copy, Clone, PartialEq, Eq, Hash)]
pub struct Group {
    factors: [Factor; MAX_FACTORS],
    len: u8,
}

impl fmt::Debug for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .factors()
            .iter()
            .map(|x| match x {
                Factor::Trivial => "1".to_string(),
                Factor::Z(n) => format!("Z{n}"),
                Factor::U1 => "U1".to_string(),
                Factor::Angle(n) => format!("Angle{n}"),
            })
            .collect();
        write!(f, "{}", parts.join("x"))
    }
}

impl Group {
    fn single(f: Factor) -> Group {
        let mut factors = [Factor::Trivial; MAX_FACTORS];
        factors[0] = f;
        Group { factors, len: 1 }
    }

    /// Symmetry-free mode: one sector per link.
    pub fn trivial() -> Group {
        Group::single(Factor::Trivial)
    }
    pub fn zn(n: u32) -> Group {
        assert!(n >= 1, "Z_n needs n >= 1");
        Group::single(Factor::Z(n))
    }
    pub fn u1() -> Group {
        Group::single(Factor::U1)
    }
    /// Rational-angle rotations with the given denominator.
    pub fn angle(denom: u32) -> Group {
        assert!(denom >= 1, "angle group needs a positive denominator");
        Group::single(Factor::Angle(denom))
    }

    pub fn product(groups: &[Group]) -> Result<Group> {
        let mut factors = [Factor::Trivial; MAX_FACTORS];
        let mut len = 0;
        for g in groups {
            for &f in g.factors() {
                if len == MAX_FACTORS {
                    return Err(TnError::Symmetry(format!(
                        "product groups support at most {MAX_FACTORS} factors"
                    )));
                }
                factors[len] = f;
                len += 1;
            }
        }
        if len == 0 {
            return Ok(Group::trivial());
        }
        Ok(Group {
            factors,
            len: len as u8,
        })
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors[..self.len as usize]
    }

    pub fn is_trivial(&self) -> bool {
        self.factors().iter().all(|f| *f == Factor::Trivial)
    }

    pub fn identity(&self) -> Qn {
        Qn::ZERO
    }

    pub fn fuse(&self, a: Qn, b: Qn) -> Qn {
        let mut q = Qn::ZERO;
        for (i, f) in self.factors().iter().enumerate() {
            q.0[i] = f.fuse(a.0[i], b.0[i]);
        }
        q
    }

    pub fn invert(&self, a: Qn) -> Qn {
        let mut q = Qn::ZERO;
        for (i, f) in self.factors().iter().enumerate() {
            q.0[i] = f.invert(a.0[i]);
        }
        q
    }

    /// Builds a quantum number from its components, checking ranges.
    pub fn qn(&self, comps: &[i64]) -> Result<Qn> {
        if comps.len() != self.len as usize {
            return Err(TnError::Symmetry(format!(
                "{self:?} needs {} components, got {}",
                self.len,
                comps.len()
            )));
        }
        let mut q = Qn::ZERO;
        q.0[..comps.len()].copy_from_slice(comps);
        self.validate(q)?;
        Ok(q)
    }

    pub fn validate(&self, q: Qn) -> Result<()> {
        for (i, f) in self.factors().iter().enumerate() {
            if !f.valid(q.0[i]) {
                return Err(TnError::Symmetry(format!(
                    "label {} out of range for factor {f:?}",
                    q.0[i]
                )));
            }
        }
        if q.0[self.len as usize..].iter().any(|&v| v != 0) {
            return Err(TnError::Symmetry(format!("label {q:?} has extra components")));
        }
        Ok(())
    }

    /// Contribution of label `q` on a link with direction `d` to the
    /// invariance constraint.
    pub fn charge(&self, q: Qn, d: Dir) -> Qn {
        match d {
            Dir::Out => q,
            Dir::In => self.invert(q),
        }
    }

    /// Label a link of direction `d` must carry to contribute `c`.
    pub fn label_for(&self, c: Qn, d: Dir) -> Qn {
        self.charge(c, d)
    }

    pub(crate) fn write(&self, out: &mut Vec<u8>) {
        out.push(self.len);
        for f in self.factors() {
            let (t, n) = f.tag();
            out.push(t);
            crate::io::put_u32(out, n);
        }
    }

    pub(crate) fn read(r: &mut crate::io::Reader<'_>) -> Result<Group> {
        let len = r.u8()? as usize;
        if len == 0 || len > MAX_FACTORS {
            return Err(TnError::Format(format!("group with {len} factors")));
        }
        let mut factors = [Factor::Trivial; MAX_FACTORS];
        for f in factors.iter_mut().take(len) {
            let t = r.u8()?;
            let n = r.u32()?;
            *f = Factor::from_tag(t, n)?;
        }
        Ok(Group {
            factors,
            len: len as u8,
        })
    }
}

/// Link direction. Incoming links enter the invariance constraint with the
/// inverted label.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Hash, PartialOrd, Ord)]
pub enum Dir {
    In,
    Out,
}

impl Dir {
    pub fn flip(self) -> Dir {
        match self {
            Dir::In => Dir::Out,
            Dir::Out => Dir::In,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn group_laws_on_examples() {
        let z2 = Group::zn(2);
        assert_eq!(z2.fuse(Qn::of(1), Qn::of(1)), Qn::of(0));
        let u1 = Group::u1();
        assert_eq!(u1.invert(Qn::of(3)), Qn::of(-3));
        let p = Group::product(&[z2, u1]).unwrap();
        let a = p.qn(&[1, 2]).unwrap();
        let b = p.qn(&[1, -5]).unwrap();
        assert_eq!(p.fuse(a, b), p.qn(&[0, -3]).unwrap());
        assert!(z2.qn(&[2]).is_err());
        assert!(p.qn(&[1]).is_err());
        assert_eq!(Group::trivial().fuse(Qn::ZERO, Qn::ZERO), Qn::ZERO);
        let ang = Group::angle(8);
        assert_eq!(ang.fuse(Qn::of(5), Qn::of(6)), Qn::of(3));
    }

    #[test]
    fn record_round_trip() {
        let g = Group::product(&[Group::zn(3), Group::u1(), Group::angle(5)]).unwrap();
        let mut buf = vec![];
        g.write(&mut buf);
        let mut r = crate::io::Reader::new(&buf);
        assert_eq!(Group::read(&mut r).unwrap(), g);
        assert!(Group::product(&[g, g]).is_err());
    }

    fn qn_in(g: Group) -> impl Strategy<Value = Qn> {
        let f = g.factors()[0];
        let range = match f {
            Factor::Z(n) => 0..n as i64,
            _ => -20i64..20,
        };
        range.prop_map(Qn::of)
    }

    proptest! {
        #[test]
        fn fusion_is_associative_and_commutative(a in qn_in(Group::zn(5)), b in qn_in(Group::zn(5)), c in qn_in(Group::zn(5))) {
            let g = Group::zn(5);
            prop_assert_eq!(g.fuse(a, b), g.fuse(b, a));
            prop_assert_eq!(g.fuse(g.fuse(a, b), c), g.fuse(a, g.fuse(b, c)));
            prop_assert_eq!(g.fuse(a, g.identity()), a);
            prop_assert_eq!(g.invert(g.fuse(a, b)), g.fuse(g.invert(a), g.invert(b)));
            prop_assert_eq!(g.fuse(a, g.invert(a)), g.identity());
        }

        #[test]
        fn u1_inversion_distributes(a in qn_in(Group::u1()), b in qn_in(Group::u1())) {
            let g = Group::u1();
            prop_assert_eq!(g.invert(g.fuse(a, b)), g.fuse(g.invert(a), g.invert(b)));
            prop_assert_eq!(g.fuse(g.fuse(a, b), g.invert(b)), a);
        }
    }
}
