//! Symbolic wavevector bookkeeping for collinear pulse sequences.
//!
//! Every pulse travels along the common z axis with wavevector k = m·k_D,
//! where m = +1 for the data-pulse direction and m = -1 for the opposite
//! direction. Echo wavevectors are integer combinations of the input
//! indices; an echo whose index has |m| ≠ 1 is phase mismatched against the
//! stored grating and radiates no macroscopic field (a silent echo), even
//! though the underlying single-atom coherence still rephases.
//!
//! The medium is never sampled on the optical-wavelength scale: this
//! integer algebra is the entire content of the phase-matching argument,
//! and the simulator consults it to decide whether a rephased coherence
//! couples to the forward field, the backward field, or neither.

/// Wavevector along the common axis in units of k_D (k = m·k_D).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WaveVectorIndex(pub i32);

impl WaveVectorIndex {
    pub const FORWARD: WaveVectorIndex = WaveVectorIndex(1);
    pub const BACKWARD: WaveVectorIndex = WaveVectorIndex(-1);
}

impl std::fmt::Display for WaveVectorIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:+}*k_D", self.0)
    }
}

/// First echo of a two-pulse sequence: k_E1 = 2·k_R1 - k_D.
///
/// A rephasing pulse counter-propagating to the data pulse puts the echo at
/// -3·k_D, which is phase mismatched and therefore silent.
pub fn echo_k_two_pulse(k_r1: WaveVectorIndex, k_d: WaveVectorIndex) -> WaveVectorIndex {
    WaveVectorIndex(2 * k_r1.0 - k_d.0)
}

/// Second echo of a double-rephasing sequence:
/// k_E2 = 2·k_R2 - k_E1 = 2·k_R2 - 2·k_R1 + k_D.
///
/// Identical rephasing directions always return the echo to the data-pulse
/// direction, whatever that common direction is.
pub fn echo_k_dr(
    k_r1: WaveVectorIndex,
    k_r2: WaveVectorIndex,
    k_d: WaveVectorIndex,
) -> WaveVectorIndex {
    WaveVectorIndex(2 * k_r2.0 - 2 * k_r1.0 + k_d.0)
}

/// Final echo of a controlled double-rephasing sequence:
/// k_E2 = k_C1 + k_C2 - k_D.
///
/// The direction is set entirely by the control pair — the rephasing pulses
/// drop out of the phase-matching condition. Counter-propagating controls
/// send the echo backward (k_E2 = -k_D); co-propagating controls along the
/// data direction send it forward.
pub fn echo_k_cdr(
    k_c1: WaveVectorIndex,
    k_c2: WaveVectorIndex,
    k_d: WaveVectorIndex,
) -> WaveVectorIndex {
    WaveVectorIndex(k_c1.0 + k_c2.0 - k_d.0)
}

/// True when the index is not a propagating collinear mode (|m| ≠ 1).
pub fn is_silent(k: WaveVectorIndex) -> bool {
    k.0.abs() != 1
}

#[cfg(test)]
mod tests {
    use super::*;

    const F: WaveVectorIndex = WaveVectorIndex(1);
    const B: WaveVectorIndex = WaveVectorIndex(-1);

    #[test]
    fn two_pulse_echo_directions() {
        assert_eq!(echo_k_two_pulse(B, F), WaveVectorIndex(-3));
        assert!(is_silent(echo_k_two_pulse(B, F)));
        assert_eq!(echo_k_two_pulse(F, F), F);
        assert_eq!(echo_k_two_pulse(B, B), B);
    }

    #[test]
    fn double_rephasing_directions() {
        assert_eq!(echo_k_dr(B, B, F), F);
        let k = echo_k_dr(B, F, F);
        assert_eq!(k, WaveVectorIndex(5));
        assert!(is_silent(k));
        assert_eq!(echo_k_dr(F, F, F), F);
    }

    #[test]
    fn cdr_directions() {
        assert_eq!(echo_k_cdr(F, B, F), B);
        assert_eq!(echo_k_cdr(F, F, F), F);
        let k = echo_k_cdr(B, B, F);
        assert_eq!(k, WaveVectorIndex(-3));
        assert!(is_silent(k));
    }

    #[test]
    fn emitting_modes_are_not_silent() {
        assert!(!is_silent(F));
        assert!(!is_silent(B));
    }

    #[test]
    fn mirror_symmetry() {
        for r1 in [-1, 1] {
            for r2 in [-1, 1] {
                for d in [-1, 1] {
                    let k = echo_k_dr(WaveVectorIndex(r1), WaveVectorIndex(r2), WaveVectorIndex(d));
                    let m = echo_k_dr(
                        WaveVectorIndex(-r1),
                        WaveVectorIndex(-r2),
                        WaveVectorIndex(-d),
                    );
                    assert_eq!(m.0, -k.0);
                    let k2 = echo_k_two_pulse(WaveVectorIndex(r1), WaveVectorIndex(d));
                    let m2 = echo_k_two_pulse(WaveVectorIndex(-r1), WaveVectorIndex(-d));
                    assert_eq!(m2.0, -k2.0);
                    let k3 = echo_k_cdr(WaveVectorIndex(r1), WaveVectorIndex(r2), WaveVectorIndex(d));
                    let m3 = echo_k_cdr(
                        WaveVectorIndex(-r1),
                        WaveVectorIndex(-r2),
                        WaveVectorIndex(-d),
                    );
                    assert_eq!(m3.0, -k3.0);
                }
            }
        }
    }

    #[test]
    fn cdr_ignores_rephasing_indices() {
        // the CDR direction formula takes no rephasing input at all; spell
        // out that swapping them in the DR formula does not leak in
        let k = echo_k_cdr(F, B, F);
        for r1 in [-1, 1] {
            for r2 in [-1, 1] {
                let _ = (r1, r2); // any rephasing geometry
                assert_eq!(echo_k_cdr(F, B, F), k);
            }
        }
    }
}
