//! Random amplitudes on lattice sites, the single-site bump and the pair
//! interaction.
//!
//! Each site value is read from its own position of a ChaCha8 keystream:
//! the key comes from the master seed, the stream id selects a trial (or any
//! other independent family), and the block counter is a bijective encoding
//! of the site coordinates. Values therefore do not depend on the region,
//! on enumeration order or on how work is scheduled.

use crate::error::{invalid, Error, Result};
use crate::geometry::{Configuration, NRectangle};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const TWO_POW_53: f64 = 9_007_199_254_740_992.0;

fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

/// Block counter for a site: zig-zagged coordinates packed into 64 bits.
fn site_block(site: &[i64]) -> Result<u64> {
    let bits = 64 / site.len().max(1) as u32;
    let limit = if bits >= 64 { u64::MAX } else { (1u64 << bits) - 1 };
    let mut block = 0u64;
    for (c, &v) in site.iter().enumerate() {
        let z = zigzag(v);
        if z > limit {
            return Err(invalid(format!("site coordinate {v} too large for dimension {}", site.len())));
        }
        block |= z << (c as u32 * bits);
    }
    Ok(block)
}

/// Uniform variate in `[0,1)` attached to `(seed, stream, site)`.
pub fn site_uniform(seed: u64, stream: u64, site: &[i64]) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(site_block(site)?) * 16);
    Ok((rng.next_u64() >> 11) as f64 / TWO_POW_53)
}

/// Single-site bump `u` with `u_- χ_{Λ_{δ-}(0)} ≤ u ≤ χ_{Λ_{δ+}(0)}`.
///
/// Cubes are half-open, `[-δ/2, δ/2)^d`, so unit cubes around lattice sites
/// tile space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleSiteProfile {
    pub u_minus: f64,
    pub delta_minus: f64,
    pub delta_plus: f64,
    #[serde(default)]
    pub shape: ProfileShape,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileShape {
    /// `u_-` on the inner cube, zero elsewhere.
    #[default]
    Plateau,
    /// `u_-` on the inner cube, then linear decay in the sup-norm to zero on
    /// the boundary of the outer cube.
    Ramp,
}

impl Default for SingleSiteProfile {
    fn default() -> Self {
        Self { u_minus: 1.0, delta_minus: 1.0, delta_plus: 1.0, shape: ProfileShape::Plateau }
    }
}

fn in_half_open_cube(y: &[f64], side: f64) -> bool {
    y.iter().all(|&v| -0.5 * side <= v && v < 0.5 * side)
}

impl SingleSiteProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.u_minus > 0.0 && self.u_minus <= 1.0) {
            return Err(invalid("profile amplitude must lie in (0, 1]"));
        }
        if !(self.delta_minus > 0.0 && self.delta_minus <= self.delta_plus && self.delta_plus.is_finite()) {
            return Err(invalid("profile widths must satisfy 0 < delta_minus <= delta_plus"));
        }
        Ok(())
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        if in_half_open_cube(y, self.delta_minus) {
            return self.u_minus;
        }
        match self.shape {
            ProfileShape::Plateau => 0.0,
            ProfileShape::Ramp => {
                if !in_half_open_cube(y, self.delta_plus) {
                    return 0.0;
                }
                let r = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let width = 0.5 * (self.delta_plus - self.delta_minus);
                self.u_minus * ((0.5 * self.delta_plus - r) / width).clamp(0.0, 1.0)
            }
        }
    }

    /// Radius beyond which `u` vanishes.
    pub fn reach(&self) -> f64 {
        0.5 * match self.shape {
            ProfileShape::Plateau => self.delta_minus,
            ProfileShape::Ramp => self.delta_plus,
        }
    }
}

/// Law of the i.i.d. amplitudes, supported in `[0, M+]` with `0` and `M+` in
/// the support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AmplitudeDistribution {
    Uniform { m_plus: f64 },
    /// Piecewise-constant density on equal bins of `[0, M+]`; weights are
    /// positive and need not be normalized.
    Histogram { m_plus: f64, weights: Vec<f64> },
}

impl Default for AmplitudeDistribution {
    fn default() -> Self {
        AmplitudeDistribution::Uniform { m_plus: 1.0 }
    }
}

impl AmplitudeDistribution {
    pub fn validate(&self) -> Result<()> {
        let m = self.m_plus();
        if !(m > 0.0 && m.is_finite()) {
            return Err(invalid("M+ must be positive"));
        }
        if let AmplitudeDistribution::Histogram { weights, .. } = self {
            if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                return Err(invalid("histogram weights must be positive"));
            }
        }
        Ok(())
    }

    pub fn m_plus(&self) -> f64 {
        match self {
            AmplitudeDistribution::Uniform { m_plus } | AmplitudeDistribution::Histogram { m_plus, .. } => *m_plus,
        }
    }

    /// Sup of the density.
    pub fn density_bound(&self) -> f64 {
        match self {
            AmplitudeDistribution::Uniform { m_plus } => 1.0 / m_plus,
            AmplitudeDistribution::Histogram { m_plus, weights } => {
                let total: f64 = weights.iter().sum();
                let max = weights.iter().copied().fold(0.0, f64::max);
                max / total * weights.len() as f64 / m_plus
            }
        }
    }

    /// Inverse distribution function.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            AmplitudeDistribution::Uniform { m_plus } => u * m_plus,
            AmplitudeDistribution::Histogram { m_plus, weights } => {
                let total: f64 = weights.iter().sum();
                let width = m_plus / weights.len() as f64;
                let mut acc = 0.0;
                for (b, w) in weights.iter().enumerate() {
                    let p = w / total;
                    if u < acc + p || b + 1 == weights.len() {
                        let frac = ((u - acc) / p).clamp(0.0, 1.0);
                        return ((b as f64 + frac) * width).min(*m_plus);
                    }
                    acc += p;
                }
                *m_plus
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            AmplitudeDistribution::Uniform { m_plus } => 0.5 * m_plus,
            AmplitudeDistribution::Histogram { m_plus, weights } => {
                let total: f64 = weights.iter().sum();
                let width = m_plus / weights.len() as f64;
                weights.iter().enumerate().map(|(b, w)| w / total * (b as f64 + 0.5) * width).sum()
            }
        }
    }
}

/// Finite box of lattice sites `lo ≤ k ≤ hi` (componentwise, inclusive).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl SiteBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::DimensionMismatch("site box corners".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(invalid("empty site region"));
        }
        Ok(Self { lo, hi })
    }

    pub fn d(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a + 1) as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, site: &[i64]) -> bool {
        site.len() == self.d() && site.iter().enumerate().all(|(c, &v)| self.lo[c] <= v && v <= self.hi[c])
    }

    fn offset(&self, site: &[i64]) -> usize {
        let mut idx = 0usize;
        for c in 0..self.d() {
            idx = idx * (self.hi[c] - self.lo[c] + 1) as usize + (site[c] - self.lo[c]) as usize;
        }
        idx
    }

    pub fn sites(&self) -> Vec<Vec<i64>> {
        let mut out = vec![Vec::new()];
        for c in 0..self.d() {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (self.lo[c]..=self.hi[c]).map(move |v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        out
    }

    /// Smallest box holding every face site of the rectangles.
    pub fn covering(rects: &[&NRectangle]) -> Result<Self> {
        let d = rects.first().ok_or_else(|| invalid("no rectangles"))?.d();
        let mut lo = vec![i64::MAX; d];
        let mut hi = vec![i64::MIN; d];
        for r in rects {
            for i in 0..r.n() {
                let (fl, fh) = face_site_range(r, i);
                for c in 0..d {
                    lo[c] = lo[c].min(fl[c]);
                    hi[c] = hi[c].max(fh[c]);
                }
            }
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            // Faces too small to hold a lattice site: keep one site so the
            // field is well defined.
            let c = rects[0].center().particle(0).iter().map(|v| v.round() as i64).collect::<Vec<_>>();
            return Self::new(c.clone(), c);
        }
        Self::new(lo, hi)
    }

    pub fn grow(&self, by: i64) -> Self {
        Self { lo: self.lo.iter().map(|v| v - by).collect(), hi: self.hi.iter().map(|v| v + by).collect() }
    }
}

/// Inclusive integer range of sites strictly inside the cube of particle `i`.
/// May be empty (lo > hi) on some coordinate.
pub fn face_site_range(rect: &NRectangle, i: usize) -> (Vec<i64>, Vec<i64>) {
    let a = rect.center().particle(i);
    let half = 0.5 * rect.sides()[i];
    let lo = a.iter().map(|&c| (c - half).floor() as i64 + 1).collect();
    let hi = a.iter().map(|&c| (c + half).ceil() as i64 - 1).collect();
    (lo, hi)
}

/// Realization `ω` on a finite box of sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderField {
    region: SiteBox,
    values: Vec<f64>,
    seed: u64,
    distribution: AmplitudeDistribution,
}

impl DisorderField {
    /// Samples every site from stream `default_stream`, except where
    /// `stream_of` returns another stream id.
    pub fn sample_with(
        region: &SiteBox,
        distribution: &AmplitudeDistribution,
        seed: u64,
        stream_of: impl Fn(&[i64]) -> u64,
    ) -> Result<Self> {
        distribution.validate()?;
        let values = region
            .sites()
            .iter()
            .map(|s| site_uniform(seed, stream_of(s), s).map(|u| distribution.quantile(u)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { region: region.clone(), values, seed, distribution: distribution.clone() })
    }

    pub fn from_values(region: &SiteBox, values: Vec<f64>, distribution: &AmplitudeDistribution) -> Result<Self> {
        distribution.validate()?;
        if values.len() != region.len() {
            return Err(Error::DimensionMismatch(format!("{} values for {} sites", values.len(), region.len())));
        }
        let m = distribution.m_plus();
        if values.iter().any(|v| !(0.0..=m).contains(v)) {
            return Err(invalid(format!("amplitudes must lie in [0, {m}]")));
        }
        Ok(Self { region: region.clone(), values, seed: 0, distribution: distribution.clone() })
    }

    pub fn constant(region: &SiteBox, value: f64, distribution: &AmplitudeDistribution) -> Result<Self> {
        Self::from_values(region, vec![value; region.len()], distribution)
    }

    pub fn region(&self) -> &SiteBox {
        &self.region
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn distribution(&self) -> &AmplitudeDistribution {
        &self.distribution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, site: &[i64]) -> Result<f64> {
        if !self.region.contains(site) {
            return Err(Error::SiteOutsideRegion { site: site.to_vec() });
        }
        Ok(self.values[self.region.offset(site)])
    }

    /// Copy with the listed sites replaced.
    pub fn with_values(&self, changes: &[(Vec<i64>, f64)]) -> Result<Self> {
        let mut out = self.clone();
        for (s, v) in changes {
            if !self.region.contains(s) {
                return Err(Error::SiteOutsideRegion { site: s.clone() });
            }
            let off = self.region.offset(s);
            out.values[off] = *v;
        }
        Ok(out)
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in self.region.lo.iter().chain(&self.region.hi) {
            h.update(v.to_le_bytes());
        }
        for v in &self.values {
            h.update(v.to_bits().to_le_bytes());
        }
        hex_prefix(&h.finalize())
    }
}

pub(crate) fn hex_prefix(bytes: &[u8]) -> String {
    bytes.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Samples `ω` with every site from one stream.
pub fn sample_disorder(region: &SiteBox, distribution: &AmplitudeDistribution, seed: u64) -> Result<DisorderField> {
    DisorderField::sample_with(region, distribution, seed, |_| 0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec {
    /// `‖Ũ‖_∞`.
    pub bound: f64,
    /// `r0`: `Ũ(y) = 0` for `‖y‖ > r0`.
    pub range: f64,
    #[serde(default)]
    pub shape: InteractionShape,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionShape {
    /// Constant `bound` on `‖y‖ ≤ r0`.
    #[default]
    Plateau,
    /// `bound·(1 − ‖y‖/r0)` on `‖y‖ ≤ r0`.
    Tent,
}

impl Default for InteractionSpec {
    fn default() -> Self {
        Self { bound: 1.0, range: 1.0, shape: InteractionShape::Plateau }
    }
}

impl InteractionSpec {
    pub fn none() -> Self {
        Self { bound: 0.0, range: 0.0, shape: InteractionShape::Plateau }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound >= 0.0 && self.bound.is_finite() && self.range >= 0.0 && self.range.is_finite()) {
            return Err(invalid("interaction bound and range must be nonnegative"));
        }
        Ok(())
    }

    pub fn pair(&self, y: &[f64]) -> f64 {
        let r = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if r > self.range || self.bound == 0.0 {
            return 0.0;
        }
        match self.shape {
            InteractionShape::Plateau => self.bound,
            InteractionShape::Tent if self.range > 0.0 => self.bound * (1.0 - r / self.range),
            InteractionShape::Tent => self.bound,
        }
    }
}

/// `Σ_{i<j} Ũ(x_i − x_j)`.
pub fn interaction_potential(spec: &InteractionSpec, x: &Configuration) -> f64 {
    let n = x.n();
    let mut total = 0.0;
    let mut diff = vec![0.0; x.d()];
    for i in 0..n {
        for j in i + 1..n {
            for (c, slot) in diff.iter_mut().enumerate() {
                *slot = x.particle(i)[c] - x.particle(j)[c];
            }
            total += spec.pair(&diff);
        }
    }
    total
}

/// Potential felt by one particle at `y` from the sites of its own face cube.
pub fn face_potential(
    rect: &NRectangle,
    i: usize,
    field: &DisorderField,
    profile: &SingleSiteProfile,
    y: &[f64],
) -> Result<f64> {
    let (flo, fhi) = face_site_range(rect, i);
    let reach = profile.reach();
    let d = y.len();
    let mut lo = Vec::with_capacity(d);
    let mut hi = Vec::with_capacity(d);
    for c in 0..d {
        lo.push(flo[c].max((y[c] - reach).floor() as i64 - 1));
        hi.push(fhi[c].min((y[c] + reach).ceil() as i64 + 1));
        if lo[c] > hi[c] {
            return Ok(0.0);
        }
    }
    let sites = SiteBox { lo, hi };
    let mut total = 0.0;
    let mut rel = vec![0.0; d];
    for k in sites.sites() {
        for c in 0..d {
            rel[c] = y[c] - k[c] as f64;
        }
        let u = profile.value(&rel);
        if u != 0.0 {
            total += field.get(&k)? * u;
        }
    }
    Ok(total)
}

/// `V(x) = Σ_i Σ_{k ∈ Λ_i ∩ Z^d} ω_k u(x_i − k)`.
pub fn finite_volume_potential(
    rect: &NRectangle,
    field: &DisorderField,
    profile: &SingleSiteProfile,
    x: &Configuration,
) -> Result<f64> {
    if !rect.contains(x.coords()) {
        return Err(invalid("point outside the rectangle"));
    }
    (0..rect.n()).map(|i| face_potential(rect, i, field, profile, x.particle(i))).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform() -> AmplitudeDistribution {
        AmplitudeDistribution::Uniform { m_plus: 1.0 }
    }

    fn rect(c: &[f64], side: f64) -> NRectangle {
        NRectangle::cube(Configuration::new(1, c.to_vec()).unwrap(), side).unwrap()
    }

    #[test]
    fn sampling_is_deterministic_and_region_free() {
        let big = SiteBox::new(vec![-20], vec![20]).unwrap();
        let small = SiteBox::new(vec![3], vec![5]).unwrap();
        let a = sample_disorder(&big, &uniform(), 7).unwrap();
        let b = sample_disorder(&big, &uniform(), 7).unwrap();
        let c = sample_disorder(&small, &uniform(), 7).unwrap();
        assert_eq!(a, b);
        for s in 3..=5 {
            assert_eq!(a.get(&[s]).unwrap(), c.get(&[s]).unwrap());
        }
        assert!(matches!(c.get(&[6]), Err(Error::SiteOutsideRegion { .. })));
        assert_ne!(a, sample_disorder(&big, &uniform(), 8).unwrap());
        assert!(SiteBox::new(vec![1], vec![0]).is_err());
    }

    #[test]
    fn uniform_mean() {
        let region = SiteBox::new(vec![0, 0], vec![99, 99]).unwrap();
        let f = sample_disorder(&region, &uniform(), 11).unwrap();
        let mean: f64 = f.values().iter().sum::<f64>() / f.values().len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
        assert!(f.values().iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn histogram_law() {
        let h = AmplitudeDistribution::Histogram { m_plus: 2.0, weights: vec![1.0, 3.0] };
        h.validate().unwrap();
        assert_eq!(h.density_bound(), 0.75);
        assert_eq!(h.quantile(0.0), 0.0);
        assert_eq!(h.quantile(0.25), 1.0);
        assert_eq!(h.quantile(1.0), 2.0);
        assert!((h.mean() - (0.25 * 0.5 + 0.75 * 1.5)).abs() < 1e-15);
        assert!(AmplitudeDistribution::Histogram { m_plus: 1.0, weights: vec![0.0] }.validate().is_err());
    }

    #[test]
    fn potential_examples() {
        let r = rect(&[0.0], 4.0);
        let region = SiteBox::covering(&[&r]).unwrap();
        assert_eq!(region, SiteBox::new(vec![-1], vec![1]).unwrap());
        let profile = SingleSiteProfile::default();
        let zero = DisorderField::constant(&region, 0.0, &uniform()).unwrap();
        let x = Configuration::new(1, vec![0.3]).unwrap();
        assert_eq!(finite_volume_potential(&r, &zero, &profile, &x).unwrap(), 0.0);
        let f = zero.with_values(&[(vec![0], 0.7)]).unwrap();
        let x0 = Configuration::new(1, vec![0.0]).unwrap();
        assert_eq!(finite_volume_potential(&r, &f, &profile, &x0).unwrap(), 0.7);
        // Half-open cells: 0.5 belongs to site 1, -0.5 to site 0.
        let half = Configuration::new(1, vec![0.5]).unwrap();
        assert_eq!(finite_volume_potential(&r, &f, &profile, &half).unwrap(), 0.0);
        let mhalf = Configuration::new(1, vec![-0.5]).unwrap();
        assert_eq!(finite_volume_potential(&r, &f, &profile, &mhalf).unwrap(), 0.7);
        let r2 = rect(&[0.0, 0.0], 4.0);
        let x2 = Configuration::new(1, vec![0.0, 0.0]).unwrap();
        assert_eq!(finite_volume_potential(&r2, &f, &profile, &x2).unwrap(), 1.4);
        assert!(finite_volume_potential(&r, &f, &profile, &Configuration::new(1, vec![2.0]).unwrap()).is_err());
    }

    #[test]
    fn only_face_sites_count() {
        // Particle cube (-1.5, 1.5) holds sites -1, 0, 1; site 2 lies outside
        // even though its bump reaches x = 1.4 for a wide ramp.
        let r = rect(&[0.0], 3.0);
        let region = SiteBox::new(vec![-3], vec![3]).unwrap();
        let profile = SingleSiteProfile { u_minus: 0.5, delta_minus: 1.0, delta_plus: 3.0, shape: ProfileShape::Ramp };
        profile.validate().unwrap();
        let f = DisorderField::constant(&region, 0.0, &uniform()).unwrap();
        let with_two = f.with_values(&[(vec![2], 1.0)]).unwrap();
        let x = Configuration::new(1, vec![1.4]).unwrap();
        assert_eq!(finite_volume_potential(&r, &with_two, &profile, &x).unwrap(), 0.0);
        let with_one = f.with_values(&[(vec![1], 1.0)]).unwrap();
        assert_eq!(finite_volume_potential(&r, &with_one, &profile, &x).unwrap(), 0.5);
        // Ramp value at distance 1.0: halfway through the shell of width 1.
        let y = Configuration::new(1, vec![0.0]).unwrap();
        assert!((finite_volume_potential(&r, &with_one, &profile, &y).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn interaction_examples() {
        let spec = InteractionSpec { bound: 2.0, range: 1.0, shape: InteractionShape::Plateau };
        assert_eq!(interaction_potential(&spec, &Configuration::new(1, vec![0.0]).unwrap()), 0.0);
        assert_eq!(interaction_potential(&spec, &Configuration::new(1, vec![0.0, 1.5]).unwrap()), 0.0);
        assert_eq!(interaction_potential(&spec, &Configuration::new(1, vec![0.0, 0.5, 1.0]).unwrap()), 6.0);
        let tent = InteractionSpec { shape: InteractionShape::Tent, ..spec };
        assert_eq!(tent.pair(&[0.5]), 1.0);
        assert_eq!(tent.pair(&[-0.5]), tent.pair(&[0.5]));
    }

    proptest! {
        #[test]
        fn potential_bounds_and_locality(seed in 0u64..500, c in -4i32..4, x in -0.99f64..0.99) {
            let r = rect(&[c as f64 * 0.5], 4.0);
            let region = SiteBox::covering(&[&r]).unwrap().grow(3);
            let profile = SingleSiteProfile { u_minus: 0.6, delta_minus: 1.0, delta_plus: 2.0, shape: ProfileShape::Ramp };
            let f = sample_disorder(&region, &uniform(), seed).unwrap();
            let p = Configuration::new(1, vec![c as f64 * 0.5 + 2.0 * x]).unwrap();
            let v = finite_volume_potential(&r, &f, &profile, &p).unwrap();
            prop_assert!(v >= 0.0 && v <= 2.0);
            // Changing sites outside the face leaves V untouched.
            let (lo, hi) = face_site_range(&r, 0);
            let outside: Vec<(Vec<i64>, f64)> = region.sites().into_iter()
                .filter(|s| s[0] < lo[0] || s[0] > hi[0]).map(|s| (s, 0.99)).collect();
            let g = f.with_values(&outside).unwrap();
            prop_assert_eq!(v.to_bits(), finite_volume_potential(&r, &g, &profile, &p).unwrap().to_bits());
        }
    }
}
