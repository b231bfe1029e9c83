//! Near-field coupling inside a twin pair.
//!
//! Each tag antenna is decomposed into a straight line conductor (the
//! meandered dipole, an electric dipole) and a small rectangle next to it
//! (the T-match loop, a magnetic dipole). Both lines carry the same reader
//! induced current `I_L0`. Each rectangle picks up flux from its own line and
//! from the line of the other tag, and the sign of each contribution depends
//! on whether that flux opposes or aids the loop's own field. The rear tag's
//! loop sits between the two lines and ends up with less current than the
//! fore tag's loop, which is what shadows it.
//!
//! Phasors: the harvested baseline current is taken as real and every
//! coupling term, which carries a `jω` factor, sits in quadrature, so
//! `|I| = sqrt(A² + k²)`.
//!
//! On top of the loop currents sits a calibrated shadow response: the rear
//! tag's chip only registers the current deficit once it exceeds a floor,
//! after which the deficit in activation power grows with the square root of
//! the excess. [`calibrate`] fits the floor, the slope and the power-to-current
//! gain to the three measured anchors of a deployment (fore/rear gap at the
//! reference spacing, the spacing where the gap closes, and the maximum
//! reader distance).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnetic constant (H/m).
pub const MU0: f64 = 4.0e-7 * PI;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Nominal carrier frequency (Hz).
pub const CARRIER_HZ: f64 = 915.0e6;

/// Reader transmit power range and step (dBm / dB).
pub const POWER_MIN_DBM: f64 = 10.0;
pub const POWER_MAX_DBM: f64 = 32.5;
pub const POWER_STEP_DB: f64 = 0.25;

/// Number of points on the transmit power grid.
pub const POWER_STEPS: usize = 91;

/// The `i`-th point of the transmit power grid.
pub fn power_level(i: usize) -> f64 {
    POWER_MIN_DBM + i as f64 * POWER_STEP_DB
}

/// Snap a power to the nearest grid point, clamped to the reader range.
pub fn snap_power(p_dbm: f64) -> f64 {
    let i = ((p_dbm - POWER_MIN_DBM) / POWER_STEP_DB).round();
    power_level(i.clamp(0.0, (POWER_STEPS - 1) as f64) as usize)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::arg(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// Boundary between the reactive near field and the far field, `2 D² / λ`.
pub fn rayleigh_length(antenna_size: f64, wavelength: f64) -> Result<f64> {
    check_positive("antenna size", antenna_size)?;
    check_positive("wavelength", wavelength)?;
    Ok(2.0 * antenna_size * antenna_size / wavelength)
}

/// Mutual inductance between an infinite straight line and a coplanar
/// rectangle of width `width` along the line, spanning radial distances
/// `[gap, gap + length]` from it: `μ0·w/(2π)·ln((gap+length)/gap)`.
pub fn mutual_inductance_line_loop(width: f64, gap: f64, length: f64, mu0: f64) -> Result<f64> {
    check_positive("loop width", width)?;
    check_positive("gap", gap)?;
    check_positive("loop length", length)?;
    check_positive("mu0", mu0)?;
    Ok(mu0 * width / (2.0 * PI) * (1.0 + length / gap).ln())
}

/// Amplitude of the quadrature current induced in a loop by a line current,
/// `ω·M·I/R`. Positive when the line's flux opposes the loop's field,
/// negative when it aids it.
pub fn induced_current(
    mutual: f64,
    line_current: f64,
    omega: f64,
    resistance: f64,
    aiding: bool,
) -> Result<f64> {
    if !(mutual >= 0.0) {
        return Err(Error::arg(format!(
            "mutual inductance must be non-negative, got {mutual}"
        )));
    }
    check_positive("omega", omega)?;
    check_positive("resistance", resistance)?;
    let magnitude = omega * mutual * line_current / resistance;
    Ok(if aiding { -magnitude } else { magnitude })
}

/// Antenna dimensions of a single tag, all in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TagGeometry {
    /// Loop width `a`, parallel to the dipole line.
    pub loop_width: f64,
    /// Loop length `b`, perpendicular to the line.
    pub loop_length: f64,
    /// Gap `r` between the loop and its own line.
    pub line_gap: f64,
    /// Unfolded length of the meandered dipole.
    pub dipole_length: f64,
    /// Operating frequency (Hz).
    pub frequency: f64,
}

impl Default for TagGeometry {
    fn default() -> Self {
        TagGeometry {
            loop_width: 5.0e-3,
            loop_length: 10.0e-3,
            line_gap: 1.0e-3,
            dipole_length: SPEED_OF_LIGHT / CARRIER_HZ / 2.0,
            frequency: CARRIER_HZ,
        }
    }
}

impl TagGeometry {
    pub fn new(
        loop_width: f64,
        loop_length: f64,
        line_gap: f64,
        dipole_length: f64,
        frequency: f64,
    ) -> Result<Self> {
        let g = TagGeometry {
            loop_width,
            loop_length,
            line_gap,
            dipole_length,
            frequency,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("loop width", self.loop_width)?;
        check_positive("loop length", self.loop_length)?;
        check_positive("line gap", self.line_gap)?;
        check_positive("dipole length", self.dipole_length)?;
        check_positive("frequency", self.frequency)?;
        if self.line_gap > self.loop_length {
            return Err(Error::arg(format!(
                "line gap {} exceeds loop length {}",
                self.line_gap, self.loop_length
            )));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI * self.frequency
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency
    }
}

/// Relative placement of the two tags, one of eight bench layouts. Classes
/// `A`..`D` put one tag's chip side against the other tag and shadow it;
/// `E`..`H` do not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
}

impl Placement {
    pub const ALL: [Placement; 8] = [
        Placement::A,
        Placement::B,
        Placement::C,
        Placement::D,
        Placement::E,
        Placement::F,
        Placement::G,
        Placement::H,
    ];

    pub fn is_shadowing(self) -> bool {
        matches!(
            self,
            Placement::A | Placement::B | Placement::C | Placement::D
        )
    }

    pub fn label(self) -> char {
        (b'a' + Placement::ALL.iter().position(|p| *p == self).unwrap_or(0) as u8) as char
    }
}

/// A pair of identical tags. `separation` is `l`, the distance from the rear
/// tag's loop to the fore tag's line, approximately the tag spacing `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwinGeometry {
    pub tag: TagGeometry,
    pub separation: f64,
    pub placement: Placement,
}

impl TwinGeometry {
    pub fn new(tag: TagGeometry, separation: f64, placement: Placement) -> Result<Self> {
        let g = TwinGeometry {
            tag,
            separation,
            placement,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        self.tag.validate()?;
        check_positive("separation", self.separation)?;
        if self.separation < self.tag.line_gap {
            return Err(Error::arg(format!(
                "separation {} is smaller than the line gap {}",
                self.separation, self.tag.line_gap
            )));
        }
        Ok(())
    }

    pub fn with_separation(mut self, separation: f64) -> Result<Self> {
        self.separation = separation;
        self.validate()?;
        Ok(self)
    }
}

/// Electrical side of the model: loop resistance, reader/tag link budget and
/// the chip's activation behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExcitationModel {
    pub mu0: f64,
    /// Equivalent loop resistance `R` (Ω).
    pub resistance: f64,
    /// Loop current needed to power the chip (A).
    pub current_threshold: f64,
    /// Line current per √W of received power (A/√W).
    pub kappa: f64,
    /// Loop-to-loop current `I_H`, subtracted from both baselines (A).
    pub loop_current: f64,
    pub reader_gain_dbi: f64,
    pub tag_gain_dbi: f64,
    /// Carrier frequency used by the free-space path loss (Hz).
    pub frequency: f64,
    /// Intrinsic current deficit (dB) below which the rear chip behaves like
    /// the fore chip.
    pub shadow_floor_db: f64,
    /// Activation penalty in dB per √dB of deficit above the floor.
    pub shadow_gain: f64,
}

impl Default for ExcitationModel {
    /// Uncalibrated values; see [`calibrate`] for the shipped deployment.
    fn default() -> Self {
        ExcitationModel {
            mu0: MU0,
            resistance: 50.0,
            current_threshold: 1.0e-4,
            kappa: 1.0,
            loop_current: 0.0,
            reader_gain_dbi: 6.0,
            tag_gain_dbi: 2.0,
            frequency: CARRIER_HZ,
            shadow_floor_db: 0.0,
            shadow_gain: 0.0,
        }
    }
}

impl ExcitationModel {
    pub fn validate(&self) -> Result<()> {
        check_positive("mu0", self.mu0)?;
        check_positive("resistance", self.resistance)?;
        check_positive("kappa", self.kappa)?;
        check_positive("frequency", self.frequency)?;
        if !(self.current_threshold >= 0.0) {
            return Err(Error::arg("current threshold must be non-negative"));
        }
        if !(self.loop_current >= 0.0) {
            return Err(Error::arg("loop current must be non-negative"));
        }
        if !(self.shadow_floor_db >= 0.0 && self.shadow_gain >= 0.0) {
            return Err(Error::arg("shadow floor and gain must be non-negative"));
        }
        Ok(())
    }

    /// Free-space path loss at distance `d` (dB).
    pub fn path_loss_db(&self, d: f64) -> f64 {
        let lambda = SPEED_OF_LIGHT / self.frequency;
        20.0 * (4.0 * PI * d / lambda).log10()
    }

    pub fn received_power_dbm(&self, p_tx_dbm: f64, d: f64) -> f64 {
        p_tx_dbm + self.reader_gain_dbi + self.tag_gain_dbi - self.path_loss_db(d)
    }

    /// Reader-induced line current `I_L0 = κ·sqrt(P_RX)`.
    pub fn line_current(&self, p_tx_dbm: f64, d: f64) -> f64 {
        let watts = 10f64.powf((self.received_power_dbm(p_tx_dbm, d) - 30.0) / 10.0);
        self.kappa * watts.sqrt()
    }
}

/// Complex loop current amplitude, `baseline + j·quadrature`. The `e^{jωt}`
/// factor is implied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasorCurrent {
    pub baseline: f64,
    pub quadrature: f64,
    pub omega: f64,
}

impl PhasorCurrent {
    pub fn magnitude(&self) -> f64 {
        self.baseline.hypot(self.quadrature)
    }
}

/// Which tag of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Fore,
    Rear,
}

/// Quadrature coupling currents `(k1, k2)` in the rear (S1) and fore (S2)
/// loops, excluding the loop-to-loop term that is common to both.
///
/// The rear loop gets an opposing contribution from its own line and an
/// aiding one from the fore line at distance `l`; the fore loop gets an
/// opposing contribution from its own line and another from the rear line,
/// which is further away than the rear loop.
pub fn twin_coupling_terms(
    g: &TwinGeometry,
    ex: &ExcitationModel,
    line_current: f64,
) -> Result<(f64, f64)> {
    g.validate()?;
    check_positive("line current", line_current)?;
    let t = &g.tag;
    let (a, b, r, l) = (t.loop_width, t.loop_length, t.line_gap, g.separation);
    let omega = t.omega();

    let own = mutual_inductance_line_loop(a, r, b, ex.mu0)?;
    let own_current = induced_current(own, line_current, omega, ex.resistance, false)?;
    if !g.placement.is_shadowing() {
        return Ok((own_current, own_current));
    }

    let m_fore_line_rear_loop = mutual_inductance_line_loop(a, l, b, ex.mu0)?;
    let i11 = own_current;
    let i21 = induced_current(
        m_fore_line_rear_loop,
        line_current,
        omega,
        ex.resistance,
        true,
    )?;

    // Seen from the rear line, the fore loop spans [2r + b + l, 2r + 2b + l].
    let m_rear_line_fore_loop = mutual_inductance_line_loop(a, 2.0 * r + b + l, b, ex.mu0)?;
    let i12 = induced_current(
        m_rear_line_fore_loop,
        line_current,
        omega,
        ex.resistance,
        false,
    )?;
    let i22 = own_current;

    Ok((i11 + i21, i12 + i22))
}

/// `K = μ0·a·ω·I_L0 / (2πR)`, the common prefactor of all coupling terms.
pub fn coupling_scale(g: &TwinGeometry, ex: &ExcitationModel, line_current: f64) -> f64 {
    ex.mu0 * g.tag.loop_width * g.tag.omega() * line_current / (2.0 * PI * ex.resistance)
}

fn check_power(p_tx_dbm: f64) -> Result<()> {
    if (POWER_MIN_DBM..=POWER_MAX_DBM).contains(&p_tx_dbm) {
        Ok(())
    } else {
        Err(Error::arg(format!(
            "transmit power {p_tx_dbm} dBm outside [{POWER_MIN_DBM}, {POWER_MAX_DBM}]"
        )))
    }
}

/// Loop currents `(I_S1, I_S2)` of the rear and fore tag at reader power
/// `p_tx_dbm` and reader distance `d`.
pub fn tag_currents(
    g: &TwinGeometry,
    ex: &ExcitationModel,
    p_tx_dbm: f64,
    d: f64,
) -> Result<(PhasorCurrent, PhasorCurrent)> {
    check_power(p_tx_dbm)?;
    check_positive("reader distance", d)?;
    ex.validate()?;
    let line_current = ex.line_current(p_tx_dbm, d);
    let (k1, k2) = twin_coupling_terms(g, ex, line_current)?;
    let baseline = line_current - ex.loop_current;
    let omega = g.tag.omega();
    Ok((
        PhasorCurrent {
            baseline,
            quadrature: k1,
            omega,
        },
        PhasorCurrent {
            baseline,
            quadrature: k2,
            omega,
        },
    ))
}

/// The circular-loop interference model that ignores antenna structure. Two
/// identical loops at the same distance from the reader pick up the same
/// current `I0` and couple back with the same factor `β·M`, so solving
/// `I1 = I0 − βM·I2`, `I2 = I0 − βM·I1` always gives `I1 = I2 = I0/(1+βM)`.
pub fn structure_oblivious_currents(
    p_tx_dbm: f64,
    d: f64,
    ex: &ExcitationModel,
    loop_coupling: f64,
) -> Result<(f64, f64)> {
    check_power(p_tx_dbm)?;
    check_positive("reader distance", d)?;
    ex.validate()?;
    if !(loop_coupling >= 0.0) {
        return Err(Error::arg("loop coupling must be non-negative"));
    }
    let i0 = ex.line_current(p_tx_dbm, d);
    // [1 c; c 1]·[I1; I2] = [I0; I0]
    let c = loop_coupling;
    let det = 1.0 - c * c;
    if det.abs() < 1e-12 {
        return Ok((i0 / (1.0 + c), i0 / (1.0 + c)));
    }
    Ok(((i0 - c * i0) / det, (i0 - c * i0) / det))
}

/// Coupling terms divided by `K`, straight from the log expressions:
/// `k1/K = ln((r+b)/r) − ln((l+b)/l)` and
/// `k2/K = ln((2r+2b+l)/(2r+b+l)) + ln((r+b)/r)`.
pub fn normalized_coupling(line_gap: f64, loop_length: f64, separation: f64) -> (f64, f64) {
    let (r, b, l) = (line_gap, loop_length, separation);
    let own = (b / r).ln_1p();
    let k1 = own - (b / l).ln_1p();
    let k2 = (b / (2.0 * r + b + l)).ln_1p() + own;
    (k1, k2)
}

/// Intrinsic fore/rear current deficit `20·log10(|I_S2|/|I_S1|)` in dB.
pub fn current_deficit_db(
    g: &TwinGeometry,
    ex: &ExcitationModel,
    p_tx_dbm: f64,
    d: f64,
) -> Result<f64> {
    let (rear, fore) = tag_currents(g, ex, p_tx_dbm, d)?;
    Ok(20.0 * (fore.magnitude() / rear.magnitude()).log10())
}

/// Extra activation power (dB) the rear chip needs on top of the fore chip.
pub fn shadow_penalty_db(
    g: &TwinGeometry,
    ex: &ExcitationModel,
    p_tx_dbm: f64,
    d: f64,
) -> Result<f64> {
    if !g.placement.is_shadowing() {
        return Ok(0.0);
    }
    let excess = current_deficit_db(g, ex, p_tx_dbm, d)? - ex.shadow_floor_db;
    Ok(if excess > 0.0 {
        ex.shadow_gain * excess.sqrt()
    } else {
        0.0
    })
}

/// Current the chip of `role` effectively sees, compared against the
/// activation threshold.
pub fn activation_current(
    g: &TwinGeometry,
    ex: &ExcitationModel,
    p_tx_dbm: f64,
    d: f64,
    role: Role,
) -> Result<f64> {
    let (_, fore) = tag_currents(g, ex, p_tx_dbm, d)?;
    match role {
        Role::Fore => Ok(fore.magnitude()),
        Role::Rear => {
            let penalty = shadow_penalty_db(g, ex, p_tx_dbm, d)?;
            Ok(fore.magnitude() * 10f64.powf(-penalty / 20.0))
        }
    }
}

/// Lowest grid power at which the tag of `role` can be read, or `None` when
/// even the maximum power is not enough.
pub fn min_activation_power(
    g: &TwinGeometry,
    ex: &ExcitationModel,
    d: f64,
    role: Role,
) -> Result<Option<f64>> {
    for i in 0..POWER_STEPS {
        let p = power_level(i);
        if activation_current(g, ex, p, d, role)? >= ex.current_threshold {
            return Ok(Some(p));
        }
    }
    Ok(None)
}

/// Transmit powers `[lower, upper)` at which the fore tag answers and the
/// rear tag does not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerWindow {
    pub lower: f64,
    pub upper: f64,
}

impl PowerWindow {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, p_dbm: f64) -> bool {
        p_dbm >= self.lower && p_dbm < self.upper
    }

    /// Centre of the window snapped to the power grid.
    pub fn midpoint(&self) -> f64 {
        let mid = snap_power((self.lower + self.upper) / 2.0);
        if self.contains(mid) {
            mid
        } else {
            self.lower
        }
    }
}

/// The critical-state window, or `None` when it is empty: the two minimum
/// powers coincide or either tag is unreachable.
pub fn critical_window(
    g: &TwinGeometry,
    ex: &ExcitationModel,
    d: f64,
) -> Result<Option<PowerWindow>> {
    let fore = min_activation_power(g, ex, d, Role::Fore)?;
    let rear = min_activation_power(g, ex, d, Role::Rear)?;
    Ok(match (fore, rear) {
        (Some(lower), Some(upper)) if upper > lower => Some(PowerWindow { lower, upper }),
        _ => None,
    })
}

/// Measured anchors a deployment is calibrated against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationTargets {
    /// Tag spacing of the reference measurement (m).
    pub reference_separation: f64,
    /// Reader distance of the reference measurement (m).
    pub reference_distance: f64,
    /// Fore/rear minimum power gap at the reference point (dB).
    pub gap_db: f64,
    /// Spacing at and beyond which the two minima coincide (m).
    pub critical_separation: f64,
    /// Reader distance at which the rear tag needs the maximum power (m).
    pub max_range: f64,
    pub current_threshold: f64,
    pub resistance: f64,
    pub loop_current: f64,
    pub reader_gain_dbi: f64,
    pub tag_gain_dbi: f64,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        CalibrationTargets {
            reference_separation: 0.010,
            reference_distance: 2.0,
            gap_db: 10.0,
            critical_separation: 0.015,
            max_range: 5.8,
            current_threshold: 1.0e-4,
            resistance: 50.0,
            loop_current: 0.0,
            reader_gain_dbi: 6.0,
            tag_gain_dbi: 2.0,
        }
    }
}

/// Fits `shadow_floor_db`, `shadow_gain` and `kappa` so that `tag` in a
/// shadowing placement reproduces `targets`.
pub fn calibrate(tag: &TagGeometry, targets: &CalibrationTargets) -> Result<ExcitationModel> {
    tag.validate()?;
    check_positive("reference distance", targets.reference_distance)?;
    check_positive("max range", targets.max_range)?;
    check_positive("gap", targets.gap_db)?;
    let mut ex = ExcitationModel {
        resistance: targets.resistance,
        current_threshold: targets.current_threshold,
        loop_current: targets.loop_current,
        reader_gain_dbi: targets.reader_gain_dbi,
        tag_gain_dbi: targets.tag_gain_dbi,
        frequency: tag.frequency,
        ..ExcitationModel::default()
    };
    ex.validate()?;

    let reference = TwinGeometry::new(*tag, targets.reference_separation, Placement::A)?;
    let critical = reference.with_separation(targets.critical_separation)?;

    // With no loop-to-loop current the deficit does not depend on power or
    // distance; otherwise it is anchored at full power at the reference
    // distance.
    let anchor = |g: &TwinGeometry, ex: &ExcitationModel| {
        current_deficit_db(g, ex, POWER_MAX_DBM, targets.reference_distance)
    };

    let solve_kappa = |ex: &mut ExcitationModel| -> Result<()> {
        // Rear activation current at full power and max range is monotone in
        // kappa; bisect in log space.
        let (mut lo, mut hi) = (-12.0f64, 12.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            ex.kappa = 10f64.powf(mid);
            let i =
                activation_current(&reference, ex, POWER_MAX_DBM, targets.max_range, Role::Rear)?;
            if i >= ex.current_threshold {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        ex.kappa = 10f64.powf(hi);
        Ok(())
    };

    // The deficit only depends on kappa through I_H; two passes settle it.
    for _ in 0..3 {
        let floor = anchor(&critical, &ex)?;
        let reference_deficit = anchor(&reference, &ex)?;
        let excess = reference_deficit - floor;
        if !(excess > 0.0) {
            return Err(Error::arg(format!(
                "reference spacing {} m does not shadow more than critical spacing {} m",
                targets.reference_separation, targets.critical_separation
            )));
        }
        ex.shadow_floor_db = floor;
        ex.shadow_gain = targets.gap_db / excess.sqrt();
        solve_kappa(&mut ex)?;
        if ex.loop_current == 0.0 {
            break;
        }
    }
    Ok(ex)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calibrated() -> (TwinGeometry, ExcitationModel) {
        let tag = TagGeometry::default();
        let ex = calibrate(&tag, &CalibrationTargets::default()).unwrap();
        (TwinGeometry::new(tag, 0.010, Placement::A).unwrap(), ex)
    }

    #[test]
    fn rayleigh_length_cases() {
        let lambda = SPEED_OF_LIGHT / CARRIER_HZ;
        assert!((lambda - 0.3277).abs() < 1e-4);
        assert!((rayleigh_length(0.16, 0.3277).unwrap() - 0.15624).abs() < 1e-4);
        assert_eq!(rayleigh_length(1.0, 2.0).unwrap(), 1.0);
        assert!(rayleigh_length(1.0, 0.0).is_err());
        assert!(rayleigh_length(-1.0, 1.0).is_err());
    }

    #[test]
    fn mutual_inductance_cases() {
        let m = mutual_inductance_line_loop(5e-3, 1e-3, 10e-3, MU0).unwrap();
        assert!((m - 2.398e-9).abs() < 1e-12, "{m}");
        let tiny = mutual_inductance_line_loop(5e-3, 1e-3, 1e-15, MU0).unwrap();
        assert!(tiny < 1e-20);
        let double = mutual_inductance_line_loop(10e-3, 1e-3, 10e-3, MU0).unwrap();
        assert!((double - 2.0 * m).abs() < 1e-20);
        assert!(mutual_inductance_line_loop(5e-3, 0.0, 10e-3, MU0).is_err());
        // strictly decreasing in the gap
        let far = mutual_inductance_line_loop(5e-3, 2e-3, 10e-3, MU0).unwrap();
        assert!(far < m);
    }

    #[test]
    fn induced_current_cases() {
        let omega = 2.0 * PI * CARRIER_HZ;
        assert_eq!(induced_current(0.0, 1e-3, omega, 50.0, false).unwrap(), 0.0);
        let m = mutual_inductance_line_loop(5e-3, 1e-3, 10e-3, MU0).unwrap();
        let i = induced_current(m, 1e-3, omega, 50.0, false).unwrap();
        assert!((i - 0.2758e-3).abs() < 1e-7, "{i}");
        let j = induced_current(m, 1e-3, omega, 50.0, true).unwrap();
        assert_eq!(j, -i);
        assert!(induced_current(m, 1e-3, omega, 0.0, false).is_err());
    }

    #[test]
    fn coupling_terms_match_closed_form_gap() {
        let g = TwinGeometry::new(TagGeometry::default(), 0.010, Placement::A).unwrap();
        let ex = ExcitationModel::default();
        let (k1, k2) = twin_coupling_terms(&g, &ex, 1e-3).unwrap();
        let k = coupling_scale(&g, &ex, 1e-3);
        let (b, r, l): (f64, f64, f64) = (10e-3, 1e-3, 10e-3);
        let expected = ((2.0 * r + 2.0 * b + l) / (2.0 * r + b + l)).ln() + ((l + b) / l).ln();
        assert!(((k2 - k1) / k - expected).abs() < 1e-12);
        assert!(k2 > k1 && k1 > 0.0);
    }

    #[test]
    fn normalized_terms_agree_with_inductance_route() {
        let ex = ExcitationModel::default();
        for (r, b, l) in [
            (1e-3, 10e-3, 10e-3),
            (0.5e-3, 3e-3, 40e-3),
            (2e-3, 2e-3, 2e-3),
        ] {
            let tag = TagGeometry {
                loop_length: b,
                line_gap: r,
                ..TagGeometry::default()
            };
            let g = TwinGeometry::new(tag, l, Placement::B).unwrap();
            let (k1, k2) = twin_coupling_terms(&g, &ex, 2e-3).unwrap();
            let k = coupling_scale(&g, &ex, 2e-3);
            let (n1, n2) = normalized_coupling(r, b, l);
            assert!((k1 / k - n1).abs() < 1e-12 && (k2 / k - n2).abs() < 1e-12);
        }
    }

    #[test]
    fn coupling_terms_vanish_with_the_loop() {
        let (k1, k2) = normalized_coupling(1e-3, 1e-15, 1e-3);
        assert!(k1.abs() < 1e-11 && k2.abs() < 1e-11);
    }

    #[test]
    fn structure_oblivious_is_symmetric() {
        let ex = ExcitationModel::default();
        for &(p, d, c) in &[(20.0, 2.0, 0.1), (32.5, 0.5, 0.9), (10.0, 10.0, 0.0)] {
            let (i1, i2) = structure_oblivious_currents(p, d, &ex, c).unwrap();
            assert_eq!(i1, i2);
        }
        let (i1, _) = structure_oblivious_currents(10.0, 1e6, &ex, 0.2).unwrap();
        assert!(i1 < 1e-6);
    }

    #[test]
    fn non_shadowing_placements_have_equal_currents() {
        let (g, ex) = calibrated();
        for p in Placement::ALL {
            let g = TwinGeometry { placement: p, ..g };
            let (rear, fore) = tag_currents(&g, &ex, 25.0, 2.0).unwrap();
            if p.is_shadowing() {
                assert!(rear.magnitude() < fore.magnitude());
            } else {
                assert_eq!(rear.magnitude(), fore.magnitude());
                assert!(critical_window(&g, &ex, 2.0).unwrap().is_none());
            }
        }
    }

    #[test]
    fn calibrated_reference_gap() {
        let (g, ex) = calibrated();
        let fore = min_activation_power(&g, &ex, 2.0, Role::Fore)
            .unwrap()
            .unwrap();
        let rear = min_activation_power(&g, &ex, 2.0, Role::Rear)
            .unwrap()
            .unwrap();
        let gap = rear - fore;
        assert!((7.0..=13.0).contains(&gap), "gap {gap}");
        let w = critical_window(&g, &ex, 2.0).unwrap().unwrap();
        assert!(w.contains(w.midpoint()));
    }

    #[test]
    fn zero_threshold_reads_at_minimum_power() {
        let (g, mut ex) = calibrated();
        ex.current_threshold = 0.0;
        assert_eq!(
            min_activation_power(&g, &ex, 2.0, Role::Fore).unwrap(),
            Some(POWER_MIN_DBM)
        );
        assert_eq!(
            min_activation_power(&g, &ex, 2.0, Role::Rear).unwrap(),
            Some(POWER_MIN_DBM)
        );
    }

    #[test]
    fn window_closes_at_critical_spacing() {
        let (g, ex) = calibrated();
        for mm in [15.0, 16.0, 20.0, 26.0] {
            let g = g.with_separation(mm * 1e-3).unwrap();
            assert!(critical_window(&g, &ex, 2.0).unwrap().is_none(), "{mm} mm");
        }
        for mm in [6.0, 8.0, 10.0, 12.0] {
            let g = g.with_separation(mm * 1e-3).unwrap();
            assert!(critical_window(&g, &ex, 2.0).unwrap().is_some(), "{mm} mm");
        }
    }

    #[test]
    fn out_of_range_power_is_rejected() {
        let (g, ex) = calibrated();
        assert!(tag_currents(&g, &ex, 9.0, 2.0).is_err());
        assert!(tag_currents(&g, &ex, 33.0, 2.0).is_err());
        assert!(tag_currents(&g, &ex, 20.0, 0.0).is_err());
    }

    #[test]
    fn geometry_validation() {
        assert!(TagGeometry::new(5e-3, 10e-3, 11e-3, 0.16, CARRIER_HZ).is_err());
        assert!(TagGeometry::new(0.0, 10e-3, 1e-3, 0.16, CARRIER_HZ).is_err());
        assert!(TwinGeometry::new(TagGeometry::default(), 0.5e-3, Placement::A).is_err());
    }

    #[test]
    fn midpoint_on_grid() {
        let w = PowerWindow {
            lower: 20.0,
            upper: 30.0,
        };
        assert_eq!(w.midpoint(), 25.0);
        let w = PowerWindow {
            lower: 20.0,
            upper: 20.25,
        };
        assert_eq!(w.midpoint(), 20.0);
    }
}
