//! Scalar abstraction shared by the plain `f64` simulator and the
//! reverse-mode differentiated rollouts used for parameter fitting.

use std::cell::RefCell;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Numeric type the vehicle model is generic over.
pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn atan(self) -> Self;
    fn atan2(self, x: Self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn abs(self) -> Self;

    /// Larger of the two by value; the derivative follows the selected branch.
    fn max(self, other: Self) -> Self {
        if other.value() > self.value() {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other.value() < self.value() {
            other
        } else {
            self
        }
    }

    fn clamp(self, lo: f64, hi: f64) -> Self {
        let v = self.value();
        if v < lo {
            Self::cst(lo)
        } else if v > hi {
            Self::cst(hi)
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn atan(self) -> Self {
        f64::atan(self)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

thread_local! {
    static TAPE: RefCell<Vec<Node>> = const { RefCell::new(Vec::new()) };
}

/// A value recorded on the current thread's tape.
///
/// Only one differentiation may be in flight per thread: creating a
/// [`Tape`] clears whatever the previous one recorded.
#[derive(Clone, Copy, Debug)]
pub struct Var {
    val: f64,
    idx: u32,
}

impl Var {
    fn push(val: f64, parents: [u32; 2], partials: [f64; 2]) -> Var {
        if parents[0] == NONE && parents[1] == NONE {
            return Var { val, idx: NONE };
        }
        let idx = TAPE.with(|t| {
            let mut t = t.borrow_mut();
            t.push(Node { parents, partials });
            (t.len() - 1) as u32
        });
        Var { val, idx }
    }

    #[inline]
    fn unary(self, val: f64, d: f64) -> Var {
        Var::push(val, [self.idx, NONE], [d, 0.0])
    }

    #[inline]
    fn binary(self, other: Var, val: f64, da: f64, db: f64) -> Var {
        Var::push(val, [self.idx, other.idx], [da, db])
    }
}

/// Handle to the thread-local tape.
pub struct Tape(());

impl Tape {
    pub fn new() -> Self {
        TAPE.with(|t| t.borrow_mut().clear());
        Tape(())
    }

    /// Registers an independent variable.
    pub fn var(&self, v: f64) -> Var {
        let idx = TAPE.with(|t| {
            let mut t = t.borrow_mut();
            t.push(Node {
                parents: [NONE, NONE],
                partials: [0.0, 0.0],
            });
            (t.len() - 1) as u32
        });
        Var { val: v, idx }
    }

    pub fn len(&self) -> usize {
        TAPE.with(|t| t.borrow().len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reverse sweep from `output`; returns adjoints for every tape entry.
    pub fn gradient(&self, output: Var) -> Adjoints {
        TAPE.with(|t| {
            let t = t.borrow();
            let mut adj = vec![0.0; t.len()];
            if output.idx != NONE {
                adj[output.idx as usize] = 1.0;
                for i in (0..=output.idx as usize).rev() {
                    let a = adj[i];
                    if a == 0.0 {
                        continue;
                    }
                    let node = t[i];
                    for k in 0..2 {
                        let p = node.parents[k];
                        if p != NONE {
                            adj[p as usize] += node.partials[k] * a;
                        }
                    }
                }
            }
            Adjoints(adj)
        })
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

pub struct Adjoints(Vec<f64>);

impl Adjoints {
    pub fn wrt(&self, v: Var) -> f64 {
        if v.idx == NONE {
            0.0
        } else {
            self.0.get(v.idx as usize).copied().unwrap_or(0.0)
        }
    }
}

impl Add for Var {
    type Output = Var;
    #[inline]
    fn add(self, o: Var) -> Var {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
}
impl Sub for Var {
    type Output = Var;
    #[inline]
    fn sub(self, o: Var) -> Var {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
}
impl Mul for Var {
    type Output = Var;
    #[inline]
    fn mul(self, o: Var) -> Var {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}
impl Div for Var {
    type Output = Var;
    #[inline]
    fn div(self, o: Var) -> Var {
        let q = self.val / o.val;
        self.binary(o, q, 1.0 / o.val, -q / o.val)
    }
}
impl Neg for Var {
    type Output = Var;
    #[inline]
    fn neg(self) -> Var {
        self.unary(-self.val, -1.0)
    }
}
impl Add<f64> for Var {
    type Output = Var;
    #[inline]
    fn add(self, o: f64) -> Var {
        self.unary(self.val + o, 1.0)
    }
}
impl Sub<f64> for Var {
    type Output = Var;
    #[inline]
    fn sub(self, o: f64) -> Var {
        self.unary(self.val - o, 1.0)
    }
}
impl Mul<f64> for Var {
    type Output = Var;
    #[inline]
    fn mul(self, o: f64) -> Var {
        self.unary(self.val * o, o)
    }
}
impl Div<f64> for Var {
    type Output = Var;
    #[inline]
    fn div(self, o: f64) -> Var {
        self.unary(self.val / o, 1.0 / o)
    }
}

impl Scalar for Var {
    #[inline]
    fn cst(v: f64) -> Self {
        Var { val: v, idx: NONE }
    }
    #[inline]
    fn value(self) -> f64 {
        self.val
    }
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
    fn atan(self) -> Self {
        self.unary(self.val.atan(), 1.0 / (1.0 + self.val * self.val))
    }
    fn atan2(self, x: Self) -> Self {
        let (y, xv) = (self.val, x.val);
        let r2 = y * y + xv * xv;
        self.binary(x, y.atan2(xv), xv / r2, -y / r2)
    }
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    fn abs(self) -> Self {
        let s = if self.val < 0.0 { -1.0 } else { 1.0 };
        self.unary(self.val.abs(), s)
    }
}
