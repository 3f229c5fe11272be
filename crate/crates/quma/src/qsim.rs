//! Qubit physics: single-qubit state vector with equatorial rotations,
//! amplitude damping, carrier-phase tracking for delayed pulses, and a
//! two-qubit register for controlled-phase sequences.

use num_complex::Complex;
use rand::Rng;

use crate::adi::{GateSemantics, PulseEvent};
use crate::scalar::Scalar;

type C<F> = Complex<F>;

/// Fraction of a carrier turn accumulated over `dt_ns` at `f_ghz`.
///
/// When the carrier period rounds to a whole number of nanoseconds the delay
/// is reduced modulo the period first, so the phase stays exact for delays of
/// billions of nanoseconds instead of losing precision in `f * dt`.
pub fn carrier_turns(f_ghz: f64, dt_ns: f64) -> f64 {
    if f_ghz == 0.0 {
        return 0.0;
    }
    let period = (1.0 / f_ghz).abs().round();
    if period >= 1.0 && (f_ghz.abs() * period - 1.0).abs() < 1e-9 {
        let reduced = dt_ns.rem_euclid(period);
        f_ghz.signum() * reduced / period
    } else {
        (f_ghz * dt_ns).fract()
    }
}

/// Single-qubit pure state alpha|0> + beta|1> with a T1 relaxation clock.
#[derive(Debug, Clone)]
pub struct QubitState<F: Scalar> {
    pub amp0: C<F>,
    pub amp1: C<F>,
    /// Simulated time of the last applied event, in ns.
    pub t_last_ns: f64,
    pub t1_ns: f64,
    /// Rotation-frame reference time for carrier-phase tracking.
    pub t_ref_ns: f64,
}

impl<F: Scalar> QubitState<F> {
    pub fn ground(t1_ns: f64) -> Self {
        QubitState {
            amp0: C::new(F::one(), F::zero()),
            amp1: C::new(F::zero(), F::zero()),
            t_last_ns: 0.0,
            t1_ns,
            t_ref_ns: 0.0,
        }
    }

    pub fn from_amplitudes(amp0: C<F>, amp1: C<F>, t1_ns: f64) -> Self {
        let mut s = Self::ground(t1_ns);
        s.amp0 = amp0;
        s.amp1 = amp1;
        s.normalize();
        s
    }

    pub fn reset(&mut self, t_ns: f64) {
        self.amp0 = C::new(F::one(), F::zero());
        self.amp1 = C::new(F::zero(), F::zero());
        self.t_last_ns = t_ns;
    }

    fn normalize(&mut self) {
        let n = (self.amp0.norm_sqr() + self.amp1.norm_sqr()).sqrt();
        if n > F::zero() {
            self.amp0 = self.amp0 / n;
            self.amp1 = self.amp1 / n;
        }
    }

    /// Excited-state population |beta|^2.
    pub fn p1(&self) -> F {
        self.amp1.norm_sqr()
    }

    /// |<self|other>|^2 for pure states.
    pub fn fidelity(&self, other: &Self) -> F {
        (self.amp0.conj() * other.amp0 + self.amp1.conj() * other.amp1).norm_sqr()
    }

    /// Rotation by `angle` about the equatorial axis `cos(axis) x + sin(axis) y`:
    /// exp(-i angle/2 (cos(axis) sigma_x + sin(axis) sigma_y)).
    pub fn apply_rotation(&mut self, axis: F, angle: F) {
        let half = angle / F::from_f64(2.0);
        let (c, s) = (half.cos(), half.sin());
        // Off-diagonal terms -i sin(angle/2) e^{-+ i axis}.
        let m01 = C::new(F::zero(), -s) * C::from_polar(F::one(), -axis);
        let m10 = C::new(F::zero(), -s) * C::from_polar(F::one(), axis);
        let (a, b) = (self.amp0, self.amp1);
        self.amp0 = a * c + b * m01;
        self.amp1 = a * m10 + b * c;
    }

    /// Deterministic amplitude damping: the excited population decays by
    /// e^{-dt/T1} and the ground amplitude absorbs the lost population, so
    /// the state stays normalized and |1> decays toward |0>.
    pub fn relax_expectation(&mut self, dt_ns: f64) {
        if dt_ns <= 0.0 || self.t1_ns <= 0.0 {
            return;
        }
        let decay = F::from_f64((-dt_ns / self.t1_ns).exp());
        let p1_new = self.p1() * decay;
        self.amp1 = self.amp1 * decay.sqrt();
        let p0_old = self.amp0.norm_sqr();
        let p0_new = F::one() - p1_new;
        if p0_old > F::zero() {
            self.amp0 = self.amp0 * (p0_new / p0_old).sqrt();
        } else {
            self.amp0 = C::new(p0_new.sqrt(), F::zero());
        }
    }

    /// Stochastic amplitude damping (quantum jump): with probability
    /// p1 (1 - e^{-dt/T1}) the qubit decays to |0>, otherwise the no-jump
    /// evolution beta -> beta e^{-dt/2T1} is applied and renormalized.
    pub fn relax_sampled<R: Rng>(&mut self, dt_ns: f64, rng: &mut R) {
        if dt_ns <= 0.0 || self.t1_ns <= 0.0 {
            return;
        }
        let survive = (-dt_ns / self.t1_ns).exp();
        let p_jump = self.p1().to_f64().unwrap_or(0.0) * (1.0 - survive);
        if rng.gen::<f64>() < p_jump {
            self.amp0 = C::new(F::one(), F::zero());
            self.amp1 = C::new(F::zero(), F::zero());
        } else {
            self.amp1 = self.amp1 * F::from_f64(survive.sqrt());
            self.normalize();
        }
    }

    /// Projective measurement in the computational basis; collapses the state.
    pub fn measure_sampled<R: Rng>(&mut self, rng: &mut R) -> bool {
        let one = rng.gen::<f64>() < self.p1().to_f64().unwrap_or(0.0);
        if one {
            let phase = self.amp1 / C::new(self.amp1.norm(), F::zero());
            self.amp0 = C::new(F::zero(), F::zero());
            self.amp1 = phase;
        } else {
            let phase = if self.amp0.norm() > F::zero() {
                self.amp0 / C::new(self.amp0.norm(), F::zero())
            } else {
                C::new(F::one(), F::zero())
            };
            self.amp0 = phase;
            self.amp1 = C::new(F::zero(), F::zero());
        }
        one
    }

    /// Applies a generated pulse. The rotation axis picks up the carrier
    /// phase accumulated at `ssb_freq_ghz` since `t_ref_ns`, so pulse timing
    /// errors rotate the effective axis. `extra_delay_ns` models a skew of
    /// this pulse relative to its nominal start.
    pub fn apply_pulse_event(
        &mut self,
        pulse: &PulseEvent,
        ssb_freq_ghz: f64,
        extra_delay_ns: f64,
    ) {
        match pulse.gate {
            GateSemantics::Identity | GateSemantics::Measurement => {}
            GateSemantics::Cz => {
                // Controlled phase needs a second qubit; on a lone qubit the
                // diagonal acts as a phase of |1>.
                self.amp1 = self.amp1 * C::from_polar(F::one(), F::from_f64(std::f64::consts::PI));
            }
            GateSemantics::Rotation { axis, angle } => {
                let dt = pulse.start_ns + extra_delay_ns - self.t_ref_ns;
                let turns = carrier_turns(ssb_freq_ghz, dt);
                let phase = axis + std::f64::consts::TAU * turns;
                self.apply_rotation(F::from_f64(phase), F::from_f64(angle));
            }
        }
        self.t_last_ns = pulse.start_ns + pulse.duration_ns;
    }
}

/// Two-qubit register |c t> with amplitudes indexed 2c + t.
#[derive(Debug, Clone)]
pub struct TwoQubitRegister<F: Scalar> {
    pub amps: [C<F>; 4],
}

impl<F: Scalar> TwoQubitRegister<F> {
    pub fn from_basis(c: u8, t: u8) -> Self {
        let mut amps = [C::new(F::zero(), F::zero()); 4];
        amps[(2 * c + t) as usize] = C::new(F::one(), F::zero());
        TwoQubitRegister { amps }
    }

    pub fn from_amplitudes(amps: [C<F>; 4]) -> Self {
        let mut reg = TwoQubitRegister { amps };
        let n = reg.amps.iter().map(|a| a.norm_sqr()).sum::<F>().sqrt();
        if n > F::zero() {
            for a in &mut reg.amps {
                *a = *a / n;
            }
        }
        reg
    }

    pub fn fidelity(&self, other: &Self) -> F {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * *b)
            .sum::<C<F>>()
            .norm_sqr()
    }

    /// Single-qubit equatorial rotation on the control (`which` = 0) or
    /// target (`which` = 1).
    pub fn apply_single(&mut self, which: u8, axis: F, angle: F) {
        let half = angle / F::from_f64(2.0);
        let (co, s) = (half.cos(), half.sin());
        let m01 = C::new(F::zero(), -s) * C::from_polar(F::one(), -axis);
        let m10 = C::new(F::zero(), -s) * C::from_polar(F::one(), axis);
        let pairs: [(usize, usize); 2] = if which == 0 { [(0, 2), (1, 3)] } else { [(0, 1), (2, 3)] };
        for (i0, i1) in pairs {
            let (a, b) = (self.amps[i0], self.amps[i1]);
            self.amps[i0] = a * co + b * m01;
            self.amps[i1] = a * m10 + b * co;
        }
    }

    /// Controlled-Z: diag(1, 1, 1, -1).
    pub fn apply_cz(&mut self) {
        self.amps[3] = -self.amps[3];
    }
}
