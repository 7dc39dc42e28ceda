//! Hilbert space-filling curve on a 2^k x 2^k grid.

use crate::error::{Error, Result};

/// Curve order `k`; the curve fills a `2^k x 2^k` grid with `4^k` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HilbertOrder(u32);

impl HilbertOrder {
    pub fn new(order: u32) -> Result<Self> {
        if order == 0 || order > 31 {
            return Err(Error::Config(format!(
                "hilbert order must be in 1..=31, got {order}"
            )));
        }
        Ok(HilbertOrder(order))
    }

    /// Order for a `side x side` grid; `side` must be a power of two.
    pub fn for_side(side: usize) -> Result<Self> {
        if side < 2 || !side.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid side must be a power of two >= 2, got {side}"
            )));
        }
        HilbertOrder::new(side.trailing_zeros())
    }

    pub fn order(self) -> u32 {
        self.0
    }

    pub fn side(self) -> usize {
        1usize << self.0
    }

    pub fn cells(self) -> usize {
        1usize << (2 * self.0)
    }
}

/// Map curve index `d` to the grid cell visited at step `d`.
pub fn hilbert_d2xy(order: HilbertOrder, d: usize) -> Result<(usize, usize)> {
    if d >= order.cells() {
        return Err(Error::Domain(format!(
            "curve index {d} out of range for order {} ({} cells)",
            order.order(),
            order.cells()
        )));
    }
    let n = order.side();
    let mut t = d;
    let (mut x, mut y) = (0usize, 0usize);
    let mut s = 1usize;
    while s < n {
        let rx = (t / 2) & 1;
        let ry = (t ^ rx) & 1;
        rot(s, &mut x, &mut y, rx, ry);
        x += s * rx;
        y += s * ry;
        t /= 4;
        s *= 2;
    }
    Ok((x, y))
}

/// Inverse of [`hilbert_d2xy`]: grid cell to curve index.
pub fn hilbert_xy2d(order: HilbertOrder, x: usize, y: usize) -> Result<usize> {
    let n = order.side();
    if x >= n || y >= n {
        return Err(Error::Domain(format!(
            "cell ({x}, {y}) out of range for order {} ({n}x{n} grid)",
            order.order()
        )));
    }
    let (mut x, mut y) = (x, y);
    let mut d = 0usize;
    let mut s = n / 2;
    while s > 0 {
        let rx = usize::from(x & s > 0);
        let ry = usize::from(y & s > 0);
        d += s * s * ((3 * rx) ^ ry);
        rot(n, &mut x, &mut y, rx, ry);
        s /= 2;
    }
    Ok(d)
}

fn rot(s: usize, x: &mut usize, y: &mut usize, rx: usize, ry: usize) {
    if ry == 0 {
        if rx == 1 {
            *x = s - 1 - *x;
            *y = s - 1 - *y;
        }
        std::mem::swap(x, y);
    }
}
