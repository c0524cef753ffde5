//! Mobilities, fractional flows, capillary pressure and the auxiliary
//! integrals built from them.
//!
//! All functions are extended by constants outside `[0, 1]`; their
//! derivatives vanish there.

mod tables;

use std::fmt;

use statrs::function::beta::{beta, beta_reg};

use crate::error::{Error, Result};
use crate::fem::quadrature::integrate_adaptive;
use tables::{Table, AUX_TOLERANCE};

/// Pointwise constitutive quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    EtaW,
    EtaO,
    FW,
    FO,
    Pc,
    PcPrime,
}

/// Auxiliary functions defined by integrals of the constitutive laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aux {
    /// `g(x) = -∫_0^x η_w η_o / (η_w + η_o) p_c'`
    G,
    /// `p_wg(x) = ∫_0^x f_o p_c'`
    Pwg,
    /// `p_og(x) = ∫_0^x f_w p_c'`
    Pog,
    /// `g_c(x) = ∫_x^1 p_c`
    Gc,
    /// Global flux `G(x) = ∫_0^x (f_w - f_o)`
    GlobalFlux,
}

const ALL_AUX: [Aux; 5] = [Aux::G, Aux::Pwg, Aux::Pog, Aux::Gc, Aux::GlobalFlux];

/// `η(s) = k s^θ` for the wetting phase, `k (1 - s)^θ` for the other.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PowerMobility {
    k: f64,
    theta: f64,
}

impl PowerMobility {
    fn value(&self, x: f64) -> f64 {
        self.k * pow(x.clamp(0.0, 1.0), self.theta)
    }

    /// Derivative with respect to `x`, one-sided at the ends of `[0, 1]`.
    fn slope(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        self.k * self.theta * pow(x, self.theta - 1.0)
    }
}

fn pow(x: f64, e: f64) -> f64 {
    if e == e.trunc() && e.abs() <= 16.0 {
        x.powi(e as i32)
    } else {
        x.powf(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CapillaryLaw {
    /// `A s^{-1/2}` above `s0`, continued linearly (C¹) below it.
    BrooksCorey { a: f64, s0: f64 },
    /// `p_c' = -c s^{β3-1} (1-s)^{β4-1}`, `p_c(1) = offset`.
    Beta { c: f64, beta3: f64, beta4: f64, offset: f64, b: f64 },
}

impl CapillaryLaw {
    fn value(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        match *self {
            CapillaryLaw::BrooksCorey { a, s0 } => {
                if s > s0 {
                    a / s.sqrt()
                } else {
                    a / s0.sqrt() - 0.5 * a * s0.powf(-1.5) * (s - s0)
                }
            }
            CapillaryLaw::Beta { c, beta3, beta4, offset, b } => offset + c * b * (1.0 - beta_reg(beta3, beta4, s)),
        }
    }

    fn slope(&self, s: f64) -> f64 {
        self.slope_split(s, 1.0 - s)
    }

    /// Slope with the complement `sc = 1 - s` supplied separately, for
    /// evaluation near a singularity at `s = 1`.
    fn slope_split(&self, s: f64, sc: f64) -> f64 {
        if !(0.0..=1.0).contains(&s) {
            return 0.0;
        }
        match *self {
            CapillaryLaw::BrooksCorey { a, s0 } => -0.5 * a * s.max(s0).powf(-1.5),
            CapillaryLaw::Beta { c, beta3, beta4, .. } => -c * pow(s, beta3 - 1.0) * pow(sc, beta4 - 1.0),
        }
    }

    fn curvature(&self, s: f64) -> f64 {
        if !(0.0..=1.0).contains(&s) {
            return 0.0;
        }
        match *self {
            CapillaryLaw::BrooksCorey { a, s0 } => {
                if s > s0 {
                    0.75 * a * s.powf(-2.5)
                } else {
                    0.0
                }
            }
            CapillaryLaw::Beta { c, beta3, beta4, .. } => {
                -c * pow(s, beta3 - 2.0) * pow(1.0 - s, beta4 - 2.0) * ((beta3 - 1.0) * (1.0 - s) - (beta4 - 1.0) * s)
            }
        }
    }
}

/// Parameters of the power-law family.
///
/// The coefficients `k_w`, `k_o`, `c` default to values in the middle of
/// their admissible brackets (`k θ = 1`, `c = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawParams {
    pub theta_w: f64,
    pub theta_o: f64,
    pub alpha_w: f64,
    pub alpha_o: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub alpha3: f64,
    pub k_w: Option<f64>,
    pub k_o: Option<f64>,
    pub c: Option<f64>,
    pub offset: f64,
}

/// Immutable fluid description: pointwise laws plus eagerly built tables of
/// the auxiliary integrals.
#[derive(Clone)]
pub struct FluidModel {
    name: &'static str,
    wet: PowerMobility,
    oil: PowerMobility,
    pc: CapillaryLaw,
    power_law: Option<PowerLawParams>,
    eta_star: f64,
    tables: Vec<Table>,
    pc0: f64,
}

impl fmt::Debug for FluidModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FluidModel")
            .field("name", &self.name)
            .field("eta_w", &self.wet)
            .field("eta_o", &self.oil)
            .field("pc", &self.pc)
            .field("eta_star", &self.eta_star)
            .finish()
    }
}

impl FluidModel {
    /// `η_w = 4 s²`, `η_o = 0.4 (1 - s)²`, Brooks–Corey `p_c` with `A = 50`.
    pub fn validation() -> Self {
        Self::brooks_corey(50.0).expect("validation model is admissible")
    }

    /// The validation mobilities with Brooks–Corey amplitude `a`.
    pub fn brooks_corey(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid(format!("capillary amplitude must be positive, got {a}")));
        }
        Self::build(
            "validation",
            PowerMobility { k: 4.0, theta: 2.0 },
            PowerMobility { k: 0.4, theta: 2.0 },
            CapillaryLaw::BrooksCorey { a, s0: 0.05 },
            None,
        )
    }

    fn build(
        name: &'static str,
        wet: PowerMobility,
        oil: PowerMobility,
        pc: CapillaryLaw,
        power_law: Option<PowerLawParams>,
    ) -> Result<Self> {
        let mut model = FluidModel { name, wet, oil, pc, power_law, eta_star: 0.0, tables: Vec::new(), pc0: 0.0 };
        model.eta_star = model.find_eta_star()?;
        model.pc0 = model.pc(0.0);
        let mut tables = Vec::with_capacity(ALL_AUX.len());
        for which in ALL_AUX {
            let table = match which {
                // stored as ∫_0^x p_c; g_c is recovered from the total
                Aux::Gc => Table::build(|s, _| model.pc(s), &model.breakpoints()),
                _ => Table::build(|s, sc| model.aux_integrand_split(which, s, sc), &model.breakpoints()),
            };
            tables.push(table.map_err(|e| match e {
                Error::Quadrature { a, b, msg } => Error::Quadrature { a, b, msg: format!("{which:?} table: {msg}") },
                e => e,
            })?);
        }
        model.tables = tables;
        Ok(model)
    }

    /// Minimum of `η_w + η_o` over `[0, 1]`: dense scan, then golden-section
    /// refinement around the best sample.
    fn find_eta_star(&self) -> Result<f64> {
        const SAMPLES: usize = 2000;
        let total = |s: f64| self.eta_w(s) + self.eta_o(s);
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for k in 0..=SAMPLES {
            let v = total(k as f64 / SAMPLES as f64);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::ModelInvalid(format!(
                    "η_w + η_o = {v} at s = {}, must be positive",
                    k as f64 / SAMPLES as f64
                )));
            }
            if v < best_val {
                best_val = v;
                best = k;
            }
        }
        let (mut a, mut b) =
            ((best.saturating_sub(1)) as f64 / SAMPLES as f64, ((best + 1).min(SAMPLES)) as f64 / SAMPLES as f64);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let (x1, x2) = (b - r * (b - a), a + r * (b - a));
            if total(x1) < total(x2) {
                b = x2;
            } else {
                a = x1;
            }
        }
        Ok(best_val.min(total(0.5 * (a + b))))
    }

    pub fn name(&self) -> &str {
        self.name
    }

    pub fn power_law_params(&self) -> Option<&PowerLawParams> {
        self.power_law.as_ref()
    }

    /// Positive lower bound of `η_w + η_o` on `[0, 1]`.
    pub fn eta_star(&self) -> f64 {
        self.eta_star
    }

    pub fn eta_w(&self, s: f64) -> f64 {
        self.wet.value(s)
    }

    pub fn eta_o(&self, s: f64) -> f64 {
        self.oil.value(1.0 - s)
    }

    pub fn eta_w_prime(&self, s: f64) -> f64 {
        self.wet.slope(s)
    }

    pub fn eta_o_prime(&self, s: f64) -> f64 {
        -self.oil.slope(1.0 - s)
    }

    pub fn f_w(&self, s: f64) -> f64 {
        let (w, o) = (self.eta_w(s), self.eta_o(s));
        w / (w + o)
    }

    pub fn f_o(&self, s: f64) -> f64 {
        let (w, o) = (self.eta_w(s), self.eta_o(s));
        o / (w + o)
    }

    pub fn f_w_prime(&self, s: f64) -> f64 {
        let (w, o) = (self.eta_w(s), self.eta_o(s));
        let (dw, d_o) = (self.eta_w_prime(s), self.eta_o_prime(s));
        (dw * o - w * d_o) / ((w + o) * (w + o))
    }

    pub fn f_o_prime(&self, s: f64) -> f64 {
        -self.f_w_prime(s)
    }

    pub fn pc(&self, s: f64) -> f64 {
        self.pc.value(s)
    }

    pub fn pc_prime(&self, s: f64) -> f64 {
        self.pc.slope(s)
    }

    pub fn pc_second(&self, s: f64) -> f64 {
        self.pc.curvature(s)
    }

    pub fn eval(&self, which: Property, s: f64) -> f64 {
        match which {
            Property::EtaW => self.eta_w(s),
            Property::EtaO => self.eta_o(s),
            Property::FW => self.f_w(s),
            Property::FO => self.f_o(s),
            Property::Pc => self.pc(s),
            Property::PcPrime => self.pc_prime(s),
        }
    }

    /// Derivative of the auxiliary function `which` (for `Gc`, `-p_c`).
    pub fn aux_integrand(&self, which: Aux, s: f64) -> f64 {
        self.aux_integrand_split(which, s, 1.0 - s)
    }

    fn aux_integrand_split(&self, which: Aux, s: f64, sc: f64) -> f64 {
        let dpc = || self.pc.slope_split(s, sc);
        match which {
            Aux::G => {
                let (w, o) = (self.eta_w(s), self.eta_o(s));
                -w * o / (w + o) * dpc()
            }
            Aux::Pwg => self.f_o(s) * dpc(),
            Aux::Pog => self.f_w(s) * dpc(),
            Aux::Gc => -self.pc(s),
            Aux::GlobalFlux => self.f_w(s) - self.f_o(s),
        }
    }

    /// Auxiliary function from the cached table; `s` is clamped to `[0, 1]`.
    pub fn eval_aux(&self, which: Aux, s: f64) -> f64 {
        let table = &self.tables[which as usize];
        match which {
            Aux::Gc => table.total() - table.eval(s),
            _ => table.eval(s),
        }
    }

    /// Auxiliary function by direct adaptive quadrature (no cache).
    pub fn eval_aux_direct(&self, which: Aux, s: f64) -> Result<f64> {
        let s = s.clamp(0.0, 1.0);
        let (a, b, f): (f64, f64, Box<dyn Fn(f64) -> f64 + '_>) = match which {
            Aux::Gc => (s, 1.0, Box::new(|x| self.pc(x))),
            _ => (0.0, s, Box::new(move |x| self.aux_integrand(which, x))),
        };
        let mut cuts = vec![a];
        cuts.extend(self.breakpoints().into_iter().filter(|&c| c > a && c < b));
        cuts.push(b);
        let mut sum = 0.0;
        for w in cuts.windows(2) {
            sum += integrate_adaptive(&f, w[0], w[1], AUX_TOLERANCE)?;
        }
        Ok(sum)
    }

    /// Interior points of `[0, 1]` where the laws are not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.pc {
            CapillaryLaw::BrooksCorey { s0, .. } => vec![s0],
            CapillaryLaw::Beta { .. } => Vec::new(),
        }
    }

    /// `p_c(0)`, the anchor of `p_wg + p_og = p_c - p_c(0)`.
    pub fn pc_at_zero(&self) -> f64 {
        self.pc0
    }
}

/// Builds a model of the power-law family, checking the derivative brackets
/// `α ≤ k θ ≤ 1/α` for both mobilities and `α_3 ≤ c ≤ 1/α_3` for `p_c'`.
pub fn make_power_law_model(p: &PowerLawParams) -> Result<FluidModel> {
    let finite = [p.theta_w, p.theta_o, p.alpha_w, p.alpha_o, p.beta3, p.beta4, p.alpha3, p.offset];
    if finite.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("power-law parameters must be finite"));
    }
    for (name, theta) in [("theta_w", p.theta_w), ("theta_o", p.theta_o)] {
        if theta < 1.0 {
            return Err(Error::invalid(format!("{name} = {theta} must be >= 1")));
        }
    }
    for (name, alpha) in [("alpha_w", p.alpha_w), ("alpha_o", p.alpha_o), ("alpha3", p.alpha3)] {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid(format!("{name} = {alpha} must lie in (0, 1]")));
        }
    }
    for (name, beta) in [("beta3", p.beta3), ("beta4", p.beta4)] {
        if !(beta > 0.0) {
            return Err(Error::invalid(format!("{name} = {beta} must be positive")));
        }
    }
    let k_w = p.k_w.unwrap_or(1.0 / p.theta_w);
    let k_o = p.k_o.unwrap_or(1.0 / p.theta_o);
    let c = p.c.unwrap_or(1.0);
    let bracket = |name: &str, value: f64, alpha: f64| {
        if !(value >= alpha && value <= 1.0 / alpha) {
            return Err(Error::invalid(format!(
                "{name} = {value} outside the admissible bracket [{alpha}, {}]",
                1.0 / alpha
            )));
        }
        Ok(())
    };
    bracket("k_w*theta_w", k_w * p.theta_w, p.alpha_w)?;
    bracket("k_o*theta_o", k_o * p.theta_o, p.alpha_o)?;
    bracket("c", c, p.alpha3)?;
    FluidModel::build(
        "power_law",
        PowerMobility { k: k_w, theta: p.theta_w },
        PowerMobility { k: k_o, theta: p.theta_o },
        CapillaryLaw::Beta { c, beta3: p.beta3, beta4: p.beta4, offset: p.offset, b: beta(p.beta3, p.beta4) },
        Some(*p),
    )
}
