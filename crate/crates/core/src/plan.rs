//! Orders, sections, cut plans, and the fabric accounting over them.
//!
//! Garment counts are integers throughout. Yardage is `f64` and only becomes
//! fractional through the marker lengths and consumption figures supplied with
//! an order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack allowed when comparing a layer length against the board.
const BOARD_SLACK: f64 = 1e-9;

/// One garment size of an order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeSpec {
    pub label: String,
    /// Yards of marker one garment of this size occupies.
    pub marker_len: f64,
    /// Yards of fabric one garment of this size consumes.
    pub consumption: f64,
}

impl SizeSpec {
    pub fn new(label: impl Into<String>, marker_len: f64, consumption: f64) -> Self {
        SizeSpec {
            label: label.into(),
            marker_len,
            consumption,
        }
    }
}

#[derive(Deserialize)]
struct OrderFile {
    board_len: f64,
    sizes: Vec<SizeSpec>,
    demands: Vec<u64>,
}

impl TryFrom<OrderFile> for Order {
    type Error = Error;

    fn try_from(raw: OrderFile) -> Result<Self> {
        Order::new(raw.sizes, raw.demands, raw.board_len)
    }
}

/// A validated cutting order: per-size demand plus the cutting-table length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OrderFile")]
pub struct Order {
    board_len: f64,
    sizes: Vec<SizeSpec>,
    demands: Vec<u64>,
}

impl Order {
    pub fn new(sizes: Vec<SizeSpec>, demands: Vec<u64>, board_len: f64) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidOrder("order has no sizes".into()));
        }
        if demands.len() != sizes.len() {
            return Err(Error::dim("demands", sizes.len(), demands.len()));
        }
        for s in &sizes {
            if !(s.marker_len.is_finite() && s.marker_len > 0.0) {
                return Err(Error::InvalidOrder(format!(
                    "size {}: marker_len must be positive, got {}",
                    s.label, s.marker_len
                )));
            }
            if !(s.consumption.is_finite() && s.consumption > 0.0) {
                return Err(Error::InvalidOrder(format!(
                    "size {}: consumption must be positive, got {}",
                    s.label, s.consumption
                )));
            }
        }
        if !(board_len.is_finite() && board_len > 0.0) {
            return Err(Error::InvalidOrder(format!(
                "board_len must be positive, got {board_len}"
            )));
        }
        let longest = sizes.iter().map(|s| s.marker_len).fold(0.0, f64::max);
        if board_len < longest {
            return Err(Error::InvalidOrder(format!(
                "board_len {board_len} is shorter than the longest marker {longest}"
            )));
        }
        Ok(Order {
            board_len,
            sizes,
            demands,
        })
    }

    /// Order whose sizes all share one marker length, with consumption equal
    /// to the marker length. Sizes are labelled `S1`, `S2`, ...
    pub fn uniform(demands: Vec<u64>, marker_len: f64, board_len: f64) -> Result<Self> {
        let sizes = (1..=demands.len())
            .map(|i| SizeSpec::new(format!("S{i}"), marker_len, marker_len))
            .collect();
        Order::new(sizes, demands, board_len)
    }

    /// The six-size reference instance: XS..XXL demands 78, 151, 214, 188,
    /// 172, 36 at three yards per garment on a nine yard board.
    pub fn reference() -> Order {
        let labels = ["XS", "S", "M", "L", "XL", "XXL"];
        let sizes = labels
            .iter()
            .map(|l| SizeSpec::new(*l, 3.0, 3.0))
            .collect();
        Order::new(sizes, vec![78, 151, 214, 188, 172, 36], 9.0)
            .expect("reference order is valid")
    }

    pub fn sizes(&self) -> &[SizeSpec] {
        &self.sizes
    }

    pub fn demands(&self) -> &[u64] {
        &self.demands
    }

    pub fn board_len(&self) -> f64 {
        self.board_len
    }

    pub fn n_sizes(&self) -> usize {
        self.sizes.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.sizes.iter().map(|s| s.label.as_str())
    }

    /// Total garments ordered.
    pub fn total_units(&self) -> u64 {
        self.demands.iter().sum()
    }

    /// Fabric needed to produce the order exactly: `R = Σ d_s · consumption_s`.
    pub fn required_fabric(&self) -> f64 {
        self.demands
            .iter()
            .zip(&self.sizes)
            .map(|(&d, s)| d as f64 * s.consumption)
            .sum()
    }

    /// Whether a marker of `layer_len` yards fits on the board.
    pub fn fits(&self, layer_len: f64) -> bool {
        layer_len <= self.board_len + BOARD_SLACK * self.board_len.max(1.0)
    }

    /// Same order with different demands.
    pub fn with_demands(&self, demands: Vec<u64>) -> Result<Order> {
        Order::new(self.sizes.clone(), demands, self.board_len)
    }

    pub(crate) fn check_len(&self, what: &'static str, len: usize) -> Result<()> {
        if len != self.sizes.len() {
            return Err(Error::dim(what, self.sizes.len(), len));
        }
        Ok(())
    }
}

/// A group of plies cut together under one marker.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Section {
    /// Number of fabric layers spread.
    pub plies: u64,
    /// Garments of each size laid out on the marker.
    pub counts: Vec<u32>,
}

impl Section {
    pub fn new(plies: u64, counts: Vec<u32>) -> Self {
        Section { plies, counts }
    }

    /// Garments of each size this section yields.
    pub fn garments(&self) -> impl Iterator<Item = u64> + '_ {
        self.counts.iter().map(move |&c| c as u64 * self.plies)
    }

    /// Number of distinct sizes on the marker.
    pub fn sizes_used(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// An ordered list of sections.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutPlan {
    pub sections: Vec<Section>,
}

impl CutPlan {
    pub fn new(sections: Vec<Section>) -> Self {
        CutPlan { sections }
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn push(&mut self, section: Section) {
        self.sections.push(section);
    }

    /// This plan followed by `other`.
    pub fn concat(&self, other: &CutPlan) -> CutPlan {
        let mut sections = self.sections.clone();
        sections.extend(other.sections.iter().cloned());
        CutPlan { sections }
    }
}

impl FromIterator<Section> for CutPlan {
    fn from_iter<I: IntoIterator<Item = Section>>(iter: I) -> Self {
        CutPlan {
            sections: iter.into_iter().collect(),
        }
    }
}

/// Marker length of a section: `C = Σ_i counts_i · marker_len_i`.
pub fn layer_length(section: &Section, order: &Order) -> Result<f64> {
    order.check_len("section counts", section.counts.len())?;
    Ok(section
        .counts
        .iter()
        .zip(order.sizes())
        .map(|(&c, s)| c as f64 * s.marker_len)
        .sum())
}

/// Units produced per size: `P_s = Σ_j plies_j · counts_js`.
pub fn production(plan: &CutPlan, order: &Order) -> Result<Vec<u64>> {
    let mut produced = vec![0u64; order.n_sizes()];
    for section in &plan.sections {
        order.check_len("section counts", section.counts.len())?;
        for (p, g) in produced.iter_mut().zip(section.garments()) {
            *p += g;
        }
    }
    Ok(produced)
}

/// Fabric spread by the plan, `F = Σ_j plies_j · C_j`.
pub fn fabric_used(plan: &CutPlan, order: &Order) -> Result<f64> {
    // Σ_j X_j Σ_i a_ij m_i == Σ_i m_i P_i; summing per size keeps integer-marker
    // instances exact and makes F - R vanish term by term when P = d, m = c.
    let produced = production(plan, order)?;
    Ok(produced
        .iter()
        .zip(order.sizes())
        .map(|(&p, s)| p as f64 * s.marker_len)
        .sum())
}

/// Waste `W = F - R`. Negative when the plan under-produces.
pub fn waste(plan: &CutPlan, order: &Order) -> Result<f64> {
    let produced = production(plan, order)?;
    let mut total = 0.0;
    for ((&p, &d), s) in produced.iter().zip(order.demands()).zip(order.sizes()) {
        total += p as f64 * s.marker_len - d as f64 * s.consumption;
    }
    Ok(total)
}

/// Per-section result of [`validate_plan`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionCheck {
    pub index: usize,
    pub layer_len: f64,
    pub within_board: bool,
    /// Section has at least one ply and at least one garment on the marker.
    pub non_empty: bool,
    pub dimension_ok: bool,
}

impl SectionCheck {
    pub fn ok(&self) -> bool {
        self.within_board && self.non_empty && self.dimension_ok
    }
}

/// Outcome of checking a plan against an order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub sections: Vec<SectionCheck>,
    pub production: Vec<u64>,
    /// `d_s - P_s`; positive entries are unmet demand.
    pub balance: Vec<i64>,
    pub feasible_exact: bool,
}

impl ValidationReport {
    pub fn board_ok(&self) -> bool {
        self.sections.iter().all(SectionCheck::ok)
    }

    pub fn balanced(&self) -> bool {
        self.balance.iter().all(|&b| b == 0)
    }
}

/// Checks every section against the board and compares production with
/// demand. Violations are reported, never raised.
pub fn validate_plan(plan: &CutPlan, order: &Order) -> ValidationReport {
    let n = order.n_sizes();
    let mut produced = vec![0u64; n];
    let mut sections = Vec::with_capacity(plan.len());
    for (index, section) in plan.sections.iter().enumerate() {
        let dimension_ok = section.counts.len() == n;
        let layer_len = layer_length(section, order).unwrap_or(f64::NAN);
        if dimension_ok {
            for (p, g) in produced.iter_mut().zip(section.garments()) {
                *p += g;
            }
        }
        sections.push(SectionCheck {
            index,
            layer_len,
            within_board: dimension_ok && order.fits(layer_len),
            non_empty: section.plies > 0 && section.counts.iter().any(|&c| c > 0),
            dimension_ok,
        });
    }
    let balance: Vec<i64> = order
        .demands()
        .iter()
        .zip(&produced)
        .map(|(&d, &p)| d as i64 - p as i64)
        .collect();
    let feasible_exact =
        sections.iter().all(SectionCheck::ok) && balance.iter().all(|&b| b == 0);
    ValidationReport {
        sections,
        production: produced,
        balance,
        feasible_exact,
    }
}
