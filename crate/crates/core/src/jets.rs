//! Second-order forward-mode automatic differentiation.
//!
//! A [`Jet2`] carries a value together with its gradient and Hessian with
//! respect to up to [`MAX_DIM`] chart variables. Storage is fixed-size so
//! jets are `Copy` and never allocate; the Hessian is kept as a packed upper
//! triangle and is therefore symmetric by construction.
//!
//! Chart maps are written once against the [`Scalar`] trait and evaluated
//! either on plain `f64` (positions only) or on `Jet2` (positions with first
//! and second derivatives).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Largest supported chart dimension.
pub const MAX_DIM: usize = 5;
const PACKED: usize = MAX_DIM * (MAX_DIM + 1) / 2;

#[inline]
fn packed(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * MAX_DIM - i + 1) / 2 + (j - i)
}

#[derive(Clone, Copy, PartialEq)]
pub struct Jet2 {
    value: f64,
    dim: usize,
    grad: [f64; MAX_DIM],
    hess: [f64; PACKED],
}

impl fmt::Debug for Jet2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet2")
            .field("value", &self.value)
            .field("grad", &self.grad())
            .field("hess", &self.hessian())
            .finish()
    }
}

/// Seed chart variable `index` at `point`: value `point[index]`, unit
/// gradient, zero Hessian.
pub fn seed_variable(index: usize, point: &[f64]) -> Result<Jet2> {
    let m = point.len();
    if m > MAX_DIM {
        return Err(Error::domain(format!(
            "chart dimension {m} exceeds supported maximum {MAX_DIM}"
        )));
    }
    if index >= m {
        return Err(Error::domain(format!(
            "variable index {index} out of range for dimension {m}"
        )));
    }
    let mut j = Jet2::constant(point[index]);
    j.dim = m;
    j.grad[index] = 1.0;
    Ok(j)
}

/// Seed all chart variables at `point`.
pub fn seed_all(point: &[f64]) -> Result<Vec<Jet2>> {
    (0..point.len()).map(|i| seed_variable(i, point)).collect()
}

impl Jet2 {
    pub fn constant(value: f64) -> Self {
        Jet2 {
            value,
            dim: 0,
            grad: [0.0; MAX_DIM],
            hess: [0.0; PACKED],
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Number of chart variables this jet depends on (0 for constants).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad[..self.dim]
    }

    pub fn partial(&self, i: usize) -> f64 {
        self.grad[i]
    }

    pub fn second(&self, i: usize, j: usize) -> f64 {
        self.hess[packed(i, j)]
    }

    pub fn hessian(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.second(i, j)).collect())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.hess.iter().all(|h| h.is_finite())
    }

    /// Compose with a univariate function whose value and first two
    /// derivatives at `self.value()` are `f`, `df`, `ddf`.
    pub fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        let mut out = Jet2::constant(f);
        out.dim = self.dim;
        for i in 0..self.dim {
            out.grad[i] = df * self.grad[i];
        }
        for i in 0..self.dim {
            for j in i..self.dim {
                let k = packed(i, j);
                out.hess[k] = df * self.hess[k] + ddf * self.grad[i] * self.grad[j];
            }
        }
        out
    }

    fn checked(self, op: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::Evaluation {
                op,
                reason: "non-finite result".into(),
            })
        }
    }

    pub fn recip(self) -> Result<Self> {
        let x = self.value;
        if x == 0.0 {
            return Err(Error::Evaluation {
                op: "div",
                reason: "division by zero".into(),
            });
        }
        let inv = 1.0 / x;
        self.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
            .checked("div")
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(mut self, rhs: Jet2) -> Jet2 {
        self.value += rhs.value;
        self.dim = self.dim.max(rhs.dim);
        for (a, b) in self.grad.iter_mut().zip(rhs.grad.iter()) {
            *a += b;
        }
        for (a, b) in self.hess.iter_mut().zip(rhs.hess.iter()) {
            *a += b;
        }
        self
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        self + (-rhs)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(mut self) -> Jet2 {
        self.value = -self.value;
        self.grad.iter_mut().for_each(|g| *g = -*g);
        self.hess.iter_mut().for_each(|h| *h = -*h);
        self
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        let dim = self.dim.max(rhs.dim);
        let mut out = Jet2::constant(self.value * rhs.value);
        out.dim = dim;
        for i in 0..dim {
            out.grad[i] = self.value * rhs.grad[i] + rhs.value * self.grad[i];
        }
        for i in 0..dim {
            for j in i..dim {
                let k = packed(i, j);
                out.hess[k] = self.value * rhs.hess[k]
                    + rhs.value * self.hess[k]
                    + self.grad[i] * rhs.grad[j]
                    + self.grad[j] * rhs.grad[i];
            }
        }
        out
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(mut self, rhs: f64) -> Jet2 {
        self.value += rhs;
        self
    }
}

impl Sub<f64> for Jet2 {
    type Output = Jet2;
    fn sub(mut self, rhs: f64) -> Jet2 {
        self.value -= rhs;
        self
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(mut self, rhs: f64) -> Jet2 {
        self.value *= rhs;
        self.grad.iter_mut().for_each(|g| *g *= rhs);
        self.hess.iter_mut().for_each(|h| *h *= rhs);
        self
    }
}

/// Univariate elementary functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryFn {
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Tanh,
    Asinh,
}

impl UnaryFn {
    pub const ALL: [UnaryFn; 9] = [
        UnaryFn::Sqrt,
        UnaryFn::Exp,
        UnaryFn::Log,
        UnaryFn::Sin,
        UnaryFn::Cos,
        UnaryFn::Sinh,
        UnaryFn::Cosh,
        UnaryFn::Tanh,
        UnaryFn::Asinh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Sqrt => "sqrt",
            UnaryFn::Exp => "exp",
            UnaryFn::Log => "log",
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Sinh => "sinh",
            UnaryFn::Cosh => "cosh",
            UnaryFn::Tanh => "tanh",
            UnaryFn::Asinh => "asinh",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|f| f.name() == name)
    }

    /// Value and first two derivatives at `x`.
    pub fn eval3(self, x: f64) -> Result<(f64, f64, f64)> {
        let op = self.name();
        let out = match self {
            UnaryFn::Sqrt => {
                if x <= 0.0 {
                    return Err(Error::Evaluation {
                        op,
                        reason: format!("non-positive argument {x}"),
                    });
                }
                let s = x.sqrt();
                (s, 0.5 / s, -0.25 / (s * x))
            }
            UnaryFn::Exp => {
                let e = x.exp();
                (e, e, e)
            }
            UnaryFn::Log => {
                if x <= 0.0 {
                    return Err(Error::Evaluation {
                        op,
                        reason: format!("non-positive argument {x}"),
                    });
                }
                (x.ln(), 1.0 / x, -1.0 / (x * x))
            }
            UnaryFn::Sin => (x.sin(), x.cos(), -x.sin()),
            UnaryFn::Cos => (x.cos(), -x.sin(), -x.cos()),
            UnaryFn::Sinh => (x.sinh(), x.cosh(), x.sinh()),
            UnaryFn::Cosh => (x.cosh(), x.sinh(), x.cosh()),
            UnaryFn::Tanh => {
                let t = x.tanh();
                let d = 1.0 - t * t;
                (t, d, -2.0 * t * d)
            }
            UnaryFn::Asinh => {
                let q = 1.0 + x * x;
                let s = q.sqrt();
                (x.asinh(), 1.0 / s, -x / (q * s))
            }
        };
        if out.0.is_finite() && out.1.is_finite() && out.2.is_finite() {
            Ok(out)
        } else {
            Err(Error::Evaluation {
                op,
                reason: format!("non-finite result at {x}"),
            })
        }
    }
}

/// Value and derivatives of `x^e` for a constant exponent.
fn pow3(x: f64, e: f64) -> Result<(f64, f64, f64)> {
    let integral = e.fract() == 0.0;
    if !integral && x < 0.0 {
        return Err(Error::Evaluation {
            op: "pow",
            reason: format!("negative base {x} with non-integer exponent {e}"),
        });
    }
    let out = if integral && e.abs() < i32::MAX as f64 {
        let k = e as i32;
        (
            x.powi(k),
            e * x.powi(k - 1),
            e * (e - 1.0) * x.powi(k - 2),
        )
    } else {
        (x.powf(e), e * x.powf(e - 1.0), e * (e - 1.0) * x.powf(e - 2.0))
    };
    // x^0 and x^1 have derivative terms that evaluate to 0 * inf at x = 0.
    let out = match e {
        0.0 => (1.0, 0.0, 0.0),
        1.0 => (x, 1.0, 0.0),
        2.0 => (x * x, 2.0 * x, 2.0),
        _ => out,
    };
    if out.0.is_finite() && out.1.is_finite() && out.2.is_finite() {
        Ok(out)
    } else {
        Err(Error::Evaluation {
            op: "pow",
            reason: format!("non-finite result for {x}^{e}"),
        })
    }
}

/// Arithmetic shared by `f64` and [`Jet2`].
pub trait Scalar:
    Copy
    + Send
    + Sync
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(&self) -> f64;
    fn unary(self, f: UnaryFn) -> Result<Self>;
    fn div(self, rhs: Self) -> Result<Self>;
    fn powf(self, e: f64) -> Result<Self>;
    /// Compose with a univariate map given its value and derivatives at
    /// `self.value()`.
    fn lift(self, f: f64, df: f64, ddf: f64) -> Self;
    /// Whether the derivative part vanishes (always true for `f64`).
    fn is_constant(&self) -> bool;

    fn sqrt(self) -> Result<Self> {
        self.unary(UnaryFn::Sqrt)
    }
    fn exp(self) -> Result<Self> {
        self.unary(UnaryFn::Exp)
    }
    fn ln(self) -> Result<Self> {
        self.unary(UnaryFn::Log)
    }
    fn sin(self) -> Result<Self> {
        self.unary(UnaryFn::Sin)
    }
    fn cos(self) -> Result<Self> {
        self.unary(UnaryFn::Cos)
    }
    fn sinh(self) -> Result<Self> {
        self.unary(UnaryFn::Sinh)
    }
    fn cosh(self) -> Result<Self> {
        self.unary(UnaryFn::Cosh)
    }
    fn tanh(self) -> Result<Self> {
        self.unary(UnaryFn::Tanh)
    }
    fn asinh(self) -> Result<Self> {
        self.unary(UnaryFn::Asinh)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn unary(self, f: UnaryFn) -> Result<Self> {
        f.eval3(self).map(|t| t.0)
    }
    fn div(self, rhs: Self) -> Result<Self> {
        if rhs == 0.0 {
            return Err(Error::Evaluation {
                op: "div",
                reason: "division by zero".into(),
            });
        }
        let q = self / rhs;
        if q.is_finite() {
            Ok(q)
        } else {
            Err(Error::Evaluation {
                op: "div",
                reason: "non-finite result".into(),
            })
        }
    }
    fn powf(self, e: f64) -> Result<Self> {
        pow3(self, e).map(|t| t.0)
    }
    fn lift(self, f: f64, _df: f64, _ddf: f64) -> Self {
        f
    }
    fn is_constant(&self) -> bool {
        true
    }
}

impl Scalar for Jet2 {
    fn from_f64(v: f64) -> Self {
        Jet2::constant(v)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn unary(self, f: UnaryFn) -> Result<Self> {
        let (v, d, dd) = f.eval3(self.value)?;
        self.chain(v, d, dd).checked(f.name())
    }
    fn div(self, rhs: Self) -> Result<Self> {
        (self * rhs.recip()?).checked("div")
    }
    fn powf(self, e: f64) -> Result<Self> {
        let (v, d, dd) = pow3(self.value, e)?;
        self.chain(v, d, dd).checked("pow")
    }
    fn lift(self, f: f64, df: f64, ddf: f64) -> Self {
        self.chain(f, df, ddf)
    }
    fn is_constant(&self) -> bool {
        self.grad.iter().all(|&g| g == 0.0) && self.hess.iter().all(|&h| h == 0.0)
    }
}

/// The elementary operation set shared by jets and the chart expression
/// language.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Pow,
    Func(UnaryFn),
}

impl ElementaryOp {
    pub fn arity(self) -> usize {
        match self {
            ElementaryOp::Add
            | ElementaryOp::Sub
            | ElementaryOp::Mul
            | ElementaryOp::Div
            | ElementaryOp::Pow => 2,
            ElementaryOp::Neg | ElementaryOp::Func(_) => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementaryOp::Add => "add",
            ElementaryOp::Sub => "sub",
            ElementaryOp::Mul => "mul",
            ElementaryOp::Div => "div",
            ElementaryOp::Neg => "neg",
            ElementaryOp::Pow => "pow",
            ElementaryOp::Func(f) => f.name(),
        }
    }
}

/// Apply an elementary operation to scalar arguments.
///
/// `Pow` with a constant exponent uses the power rule; a varying exponent is
/// routed through `exp(y * log x)` and inherits the logarithm's domain.
/// Non-finite results are reported as evaluation errors.
pub fn apply<S: Scalar>(op: ElementaryOp, args: &[S]) -> Result<S> {
    if args.len() != op.arity() {
        return Err(Error::Evaluation {
            op: op.name(),
            reason: format!("expected {} arguments, got {}", op.arity(), args.len()),
        });
    }
    let out = match op {
        ElementaryOp::Add => args[0] + args[1],
        ElementaryOp::Sub => args[0] - args[1],
        ElementaryOp::Mul => args[0] * args[1],
        ElementaryOp::Div => args[0].div(args[1])?,
        ElementaryOp::Neg => -args[0],
        ElementaryOp::Pow => {
            if args[1].is_constant() {
                args[0].powf(args[1].value())?
            } else {
                (args[1] * args[0].ln()?).exp()?
            }
        }
        ElementaryOp::Func(f) => args[0].unary(f)?,
    };
    if out.value().is_finite() {
        Ok(out)
    } else {
        Err(Error::Evaluation {
            op: op.name(),
            reason: "non-finite result".into(),
        })
    }
}

/// [`apply`] specialised to jets.
pub fn jet_apply(op: ElementaryOp, args: &[Jet2]) -> Result<Jet2> {
    let out = apply(op, args)?;
    out.checked(op.name())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn x_at(v: f64) -> Jet2 {
        seed_variable(0, &[v]).unwrap()
    }

    #[test]
    fn seeding() {
        let p = [3.0, 4.0];
        let a = seed_variable(0, &p).unwrap();
        assert_eq!(a.value(), 3.0);
        assert_eq!(a.grad(), &[1.0, 0.0]);
        assert_eq!(a.hessian(), vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        let b = seed_variable(1, &p).unwrap();
        assert_eq!(b.value(), 4.0);
        assert_eq!(b.grad(), &[0.0, 1.0]);
        assert!(matches!(seed_variable(2, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn square_has_constant_curvature() {
        let x = x_at(3.0);
        let y = jet_apply(ElementaryOp::Mul, &[x, x]).unwrap();
        assert_eq!(y.value(), 9.0);
        assert_eq!(y.grad(), &[6.0]);
        assert_eq!(y.second(0, 0), 2.0);
    }

    #[test]
    fn sinh_at_zero() {
        let y = jet_apply(ElementaryOp::Func(UnaryFn::Sinh), &[x_at(0.0)]).unwrap();
        assert_eq!(y.value(), 0.0);
        assert_eq!(y.grad(), &[1.0]);
    }

    #[test]
    fn hyperbolic_identity_is_flat() {
        for &v in &[-2.0, -0.3, 0.0, 0.7, 1.9] {
            let x = x_at(v);
            let c = x.cosh().unwrap();
            let s = x.sinh().unwrap();
            let one = c * c - s * s;
            assert!((one.value() - 1.0).abs() < 1e-12);
            assert!(one.partial(0).abs() < 1e-12);
            assert!(one.second(0, 0).abs() < 1e-12);
        }
    }

    #[test]
    fn domain_errors_name_the_op() {
        let z = x_at(0.0);
        match jet_apply(ElementaryOp::Div, &[x_at(1.0), z]) {
            Err(Error::Evaluation { op, .. }) => assert_eq!(op, "div"),
            other => panic!("{other:?}"),
        }
        match jet_apply(ElementaryOp::Func(UnaryFn::Sqrt), &[x_at(-1.0)]) {
            Err(Error::Evaluation { op, .. }) => assert_eq!(op, "sqrt"),
            other => panic!("{other:?}"),
        }
        match jet_apply(ElementaryOp::Func(UnaryFn::Log), &[z]) {
            Err(Error::Evaluation { op, .. }) => assert_eq!(op, "log"),
            other => panic!("{other:?}"),
        }
        assert!(jet_apply(ElementaryOp::Func(UnaryFn::Exp), &[x_at(1000.0)]).is_err());
        assert!(jet_apply(ElementaryOp::Add, &[z]).is_err());
    }

    #[test]
    fn varying_exponent_goes_through_log() {
        let p = [2.0, 3.0];
        let x = seed_variable(0, &p).unwrap();
        let y = seed_variable(1, &p).unwrap();
        let v = jet_apply(ElementaryOp::Pow, &[x, y]).unwrap();
        assert!((v.value() - 8.0).abs() < 1e-12);
        // d/dy x^y = x^y ln x
        assert!((v.partial(1) - 8.0 * 2f64.ln()).abs() < 1e-12);
        let neg = seed_variable(0, &[-2.0, 3.0]).unwrap();
        assert!(jet_apply(ElementaryOp::Pow, &[neg, y]).is_err());
        // constant integer exponent accepts negative bases
        let sq = jet_apply(ElementaryOp::Pow, &[neg, Jet2::constant(2.0)]).unwrap();
        assert_eq!(sq.value(), 4.0);
    }

    #[test]
    fn hessian_is_symmetric_in_two_variables() {
        let p = [0.4, -1.3];
        let u = seed_variable(0, &p).unwrap();
        let v = seed_variable(1, &p).unwrap();
        let f = (u * v).sin().unwrap() * u.exp().unwrap();
        assert_eq!(f.second(0, 1), f.second(1, 0));
        let h = f.hessian();
        assert_eq!(h[0][1], h[1][0]);
    }

    fn domain(f: UnaryFn) -> std::ops::Range<f64> {
        match f {
            UnaryFn::Sqrt | UnaryFn::Log => 0.2..5.0,
            UnaryFn::Sin | UnaryFn::Cos => -5.0..5.0,
            _ => -2.5..2.5,
        }
    }

    fn ops() -> impl Strategy<Value = (ElementaryOp, f64, f64)> {
        let unary = (0..UnaryFn::ALL.len()).prop_flat_map(|k| {
            let f = UnaryFn::ALL[k];
            let d = domain(f);
            let half = (d.start * 0.5)..(d.end * 0.5);
            (Just(ElementaryOp::Func(f)), half.clone(), half)
        });
        let binary = prop_oneof![
            Just(ElementaryOp::Add),
            Just(ElementaryOp::Sub),
            Just(ElementaryOp::Mul),
            Just(ElementaryOp::Div),
            Just(ElementaryOp::Pow),
        ]
        .prop_flat_map(|op| (Just(op), 0.3..3.0, 0.3..2.5));
        prop_oneof![unary, binary, (Just(ElementaryOp::Neg), -3.0..3.0, -3.0..3.0)]
    }

    /// Arguments built from two seeded variables; unary ops see `x + 0.3 y`
    /// so that mixed second derivatives are exercised.
    fn eval<S: Scalar>(op: ElementaryOp, x: S, y: S) -> S {
        let args = if op.arity() == 1 {
            vec![x + y * S::from_f64(0.3)]
        } else {
            vec![x, y]
        };
        apply(op, &args).unwrap()
    }

    fn jet_at(op: ElementaryOp, p: [f64; 2]) -> Jet2 {
        let s = seed_all(&p).unwrap();
        eval(op, s[0], s[1])
    }

    fn close(fd: f64, ad: f64) -> bool {
        (fd - ad).abs() <= 1e-6 * ad.abs().max(1.0)
    }

    proptest! {
        #[test]
        fn derivatives_match_central_differences((op, x, y) in ops()) {
            let h = 1e-5;
            let p = [x, y];
            let jet = jet_at(op, p);
            for i in 0..2 {
                let mut hi = p;
                let mut lo = p;
                hi[i] += h;
                lo[i] -= h;
                let fd = (eval::<f64>(op, hi[0], hi[1]) - eval::<f64>(op, lo[0], lo[1])) / (2.0 * h);
                prop_assert!(close(fd, jet.partial(i)), "{op:?} d{i}: {fd} vs {}", jet.partial(i));
                let (jh, jl) = (jet_at(op, hi), jet_at(op, lo));
                for j in 0..2 {
                    let fd2 = (jh.partial(j) - jl.partial(j)) / (2.0 * h);
                    prop_assert!(close(fd2, jet.second(i, j)), "{op:?} d{i}{j}: {fd2} vs {}", jet.second(i, j));
                }
            }
        }

        #[test]
        fn sums_and_products_associate(a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64) {
            let s = seed_all(&[a, b, c]).unwrap();
            let (x, y, z) = (s[0], s[1], s[2]);
            let pairs = [((x + y) + z, x + (y + z)), ((x * y) * z, x * (y * z))];
            for (l, r) in pairs {
                let scale = l.value().abs().max(1.0);
                prop_assert!((l.value() - r.value()).abs() <= 1e-14 * scale);
                for i in 0..3 {
                    let gs = l.partial(i).abs().max(1.0);
                    prop_assert!((l.partial(i) - r.partial(i)).abs() <= 1e-14 * gs);
                    for j in 0..3 {
                        let hs = l.second(i, j).abs().max(1.0);
                        prop_assert!((l.second(i, j) - r.second(i, j)).abs() <= 1e-14 * hs);
                    }
                }
            }
        }
    }
}
