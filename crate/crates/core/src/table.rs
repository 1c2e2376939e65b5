//! Dense bipartite conditional table `P(ab|xy)` stored row-major in
//! `(x, y, a, b)` order.

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Table {
    pub m_a: usize,
    pub m_b: usize,
    pub na: usize,
    pub nb: usize,
    pub data: Vec<f64>,
}

impl Table {
    pub fn zeros(m_a: usize, m_b: usize, na: usize, nb: usize) -> Self {
        Self {
            m_a,
            m_b,
            na,
            nb,
            data: vec![0.0; m_a * m_b * na * nb],
        }
    }

    pub fn len_for(m_a: usize, m_b: usize, na: usize, nb: usize) -> usize {
        m_a * m_b * na * nb
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, a: usize, b: usize) -> usize {
        debug_assert!(x < self.m_a && y < self.m_b && a < self.na && b < self.nb);
        ((x * self.m_b + y) * self.na + a) * self.nb + b
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.data[self.idx(x, y, a, b)]
    }

    #[inline]
    pub fn add(&mut self, x: usize, y: usize, a: usize, b: usize, w: f64) {
        let i = self.idx(x, y, a, b);
        self.data[i] += w;
    }

    /// Block of `nb`-length rows for one setting pair.
    pub fn block(&self, x: usize, y: usize) -> &[f64] {
        let start = self.idx(x, y, 0, 0);
        &self.data[start..start + self.na * self.nb]
    }

    pub fn alice_marginal(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.na)
            .map(|a| (0..self.nb).map(|b| self.get(x, y, a, b)).sum())
            .collect()
    }

    pub fn bob_marginal(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.nb)
            .map(|b| (0..self.na).map(|a| self.get(x, y, a, b)).sum())
            .collect()
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn normalization_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for x in 0..self.m_a {
            for y in 0..self.m_b {
                let s: f64 = self.block(x, y).iter().sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        worst
    }

    /// Largest deviation of a party's marginal from its value at the other
    /// party's first setting.
    pub fn no_signalling_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for x in 0..self.m_a {
            let reference = self.alice_marginal(x, 0);
            for y in 1..self.m_b {
                worst = worst.max(max_abs_diff(&reference, &self.alice_marginal(x, y)));
            }
        }
        for y in 0..self.m_b {
            let reference = self.bob_marginal(0, y);
            for x in 1..self.m_a {
                worst = worst.max(max_abs_diff(&reference, &self.bob_marginal(x, y)));
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Table) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        max_abs_diff(&self.data, &other.data)
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}
