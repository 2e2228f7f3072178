//! Closed-form block and range-Doppler-map SINR predictions. Everything is
//! linear power; `Ñx` arguments are sample counts divided by Nc and `fdt` is
//! the Doppler shift times the OFDM symbol duration.

use num_traits::{Float, FloatConst};

#[inline]
fn lit<T: Float>(x: f64) -> T {
    T::from(x).expect("representable literal")
}

#[inline]
fn doppler_cos<T: Float + FloatConst>(fdt: T) -> T {
    (lit::<T>(2.0) * T::PI() * fdt).cos()
}

/// Interference-free block SINR, `|α̃aᵀw|²·E|S|² / (λ_u σ²)`.
pub fn gamma0<T: Float>(gain2: T, lambda_u: T, sigma2: T, symbol_power: T) -> T {
    gain2 * symbol_power / (lambda_u * sigma2)
}

/// Useful, ISI and ICI power without compensation.
pub fn powers_before<T: Float>(ne: T, gain2: T, symbol_power: T) -> (T, T, T) {
    let g = gain2 * symbol_power;
    let one = T::one();
    ((one - ne) * (one - ne) * g, ne * g, ne * (one - ne) * g)
}

pub fn sinr_block_before<T: Float>(ne: T, gamma0: T) -> T {
    let one = T::one();
    (one - ne) * (one - ne) / (ne * (lit::<T>(2.0) - ne) + one / gamma0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSinrInputs<T> {
    pub ne: T,
    pub na: T,
    pub ns: T,
    pub gamma0: T,
    pub fdt: T,
}

/// Useful power after compensation, relative to `|α̃aᵀw|²·E|S|²`.
pub fn useful_power_after<T: Float + FloatConst>(ne: T, na: T, fdt: T) -> T {
    let one = T::one();
    let two = lit::<T>(2.0);
    (one - ne) * (one - ne) + na * na + two * na * (one - ne) * doppler_cos(fdt)
}

/// ICI power after compensation, relative to `|α̃aᵀw|²·E|S|²`.
pub fn ici_power_after<T: Float + FloatConst>(ne: T, na: T, fdt: T) -> T {
    let one = T::one();
    let two = lit::<T>(2.0);
    na * (one - na) + ne * (one - ne) + two * (na * ne - na.min(ne)) * doppler_cos(fdt)
}

/// Noise power after adding `Na` tail samples.
pub fn noise_power_after<T: Float>(na: T, lambda_u: T, sigma2: T) -> T {
    (T::one() + na) * lambda_u * sigma2
}

/// Block SINR after compensation; the `Na > Ns` branch pulls in the next
/// symbol's ISI.
pub fn sinr_block_after<T: Float + FloatConst>(x: &BlockSinrInputs<T>) -> T {
    let one = T::one();
    let two = lit::<T>(2.0);
    let c = doppler_cos(x.fdt);
    let (ne, na, ns) = (x.ne, x.na, x.ns);
    if na <= ns {
        let num = useful_power_after(ne, na, x.fdt);
        let den = na * (one - na + two * ne * c) + ne * (two - ne) - two * na.min(ne) * c
            + (one + na) / x.gamma0;
        num / den
    } else {
        let num = (one - ne) * (one - ne) + ns * ns + two * ns * (one - ne) * c;
        let den = ns * (one - ns) + ne * (two - ne) + (na - ns) + two * (ns * ne - ne) * c
            + (one + na) / x.gamma0;
        num / den
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalNa<T> {
    pub ne_samples: usize,
    pub ns_samples: usize,
    pub sinr_at_ne: T,
    pub sinr_at_ns: T,
    /// Whichever candidate gives the larger block SINR; `Ne` on a tie.
    pub argmax: usize,
}

/// Evaluates the block SINR at the two candidate lengths `Ne` and `Ns`.
pub fn optimal_na<T: Float + FloatConst>(ne_samples: usize, ns_samples: usize, nc: usize, gamma0: T, fdt: T) -> OptimalNa<T> {
    let frac = |n: usize| T::from(n).expect("count") / T::from(nc).expect("count");
    let eval = |na: usize| {
        sinr_block_after(&BlockSinrInputs {
            ne: frac(ne_samples),
            na: frac(na),
            ns: frac(ns_samples),
            gamma0,
            fdt,
        })
    };
    let (a, b) = (eval(ne_samples), eval(ns_samples));
    OptimalNa {
        ne_samples,
        ns_samples,
        sinr_at_ne: a,
        sinr_at_ns: b,
        argmax: if b > a { ns_samples } else { ne_samples },
    }
}

/// ICI coefficient of the separated, compensated stream.
pub fn ici_coeff_a<T: Float + FloatConst>(na: T, ne: T, fdt: T) -> T {
    ici_power_after(ne, na, fdt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdmSinrInputs<T> {
    pub block: BlockSinrInputs<T>,
    pub m: usize,
    pub nc: usize,
    pub lambda_u: T,
    pub sigma2: T,
    /// `E[|1/S|²]`.
    pub mean_inv_symbol_power: T,
    /// `|α̃_u·aᵀ(θ_u)·w_tx|²`.
    pub gain2: T,
    /// `E[|S|²]`.
    pub symbol_power: T,
}

impl<T: Float> RdmSinrInputs<T> {
    fn mnc(&self) -> T {
        T::from(self.m * self.nc).expect("count")
    }
}

/// Compensated-stream RDM SINR for `Na ≤ Ns`.
pub fn sinr_rdm_cc<T: Float + FloatConst>(x: &RdmSinrInputs<T>) -> T {
    let one = T::one();
    let b = &x.block;
    let a = ici_coeff_a(b.na, b.ne, b.fdt);
    let peak = (one + b.na - b.ne) * (one + b.na - b.ne) * x.gain2;
    let var = x.mean_inv_symbol_power / x.mnc()
        * ((b.ne + a) * x.gain2 * x.symbol_power + (one + b.na) * x.lambda_u * x.sigma2);
    one + peak / var
}

/// Compensated-stream RDM SINR for `Ns < Na ≤ Nc`.
pub fn sinr_rdm_cc_large_na<T: Float + FloatConst>(x: &RdmSinrInputs<T>) -> T {
    let one = T::one();
    let b = &x.block;
    let d = b.ns - b.ne;
    let peak = (one + d) * (one + d) * x.gain2;
    let var = x.mean_inv_symbol_power / x.mnc()
        * ((b.na - d * d) * x.gain2 * x.symbol_power + (one + b.na) * x.lambda_u * x.sigma2);
    one + peak / var
}

/// Separated stream without compensation.
pub fn sinr_rdm_sep<T: Float>(x: &RdmSinrInputs<T>) -> T {
    let one = T::one();
    let ne = x.block.ne;
    let e = x.mean_inv_symbol_power;
    one + x.mnc() * (one - ne) * (one - ne)
        / (ne * (lit::<T>(2.0) - ne) * x.symbol_power * e + x.lambda_u * x.sigma2 * e / x.gain2)
}

/// One target's contribution to the beamformed (no separation) stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradTerm<T> {
    pub ne: T,
    /// `|α̃_p·w_rxᵀb(θ_p)·aᵀ(θ_p)w_tx|²`.
    pub gain2: T,
}

/// Beamformed-stream RDM SINR of target `u`; every target's CP overrun
/// contributes interference.
#[allow(clippy::too_many_arguments)]
pub fn sinr_rdm_trad<T: Float>(
    u: usize,
    terms: &[TradTerm<T>],
    m: usize,
    nc: usize,
    w_rx_norm2: T,
    sigma2: T,
    mean_inv_symbol_power: T,
    symbol_power: T,
) -> T {
    let one = T::one();
    let two = lit::<T>(2.0);
    let t = terms[u];
    let mnc = T::from(m * nc).expect("count");
    let interference = terms
        .iter()
        .fold(T::zero(), |s, p| s + p.ne * (two - p.ne) * p.gain2 * symbol_power);
    one + mnc * (one - t.ne) * (one - t.ne) * t.gain2
        / ((interference + w_rx_norm2 * sigma2) * mean_inv_symbol_power)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdmMethod {
    /// Separation with coherent compensation, `Na ≤ Ns`.
    Cc,
    /// Separation with coherent compensation, `Na > Ns`.
    CcLargeNa,
    /// Separation only.
    Sep,
    /// Beamforming only.
    Trad,
}

/// Dispatches to the matching closed form. `Cc` falls through to the
/// large-`Na` branch when `Na > Ns`. `trad` carries the per-target terms and
/// `‖w_rx‖²` for [`RdmMethod::Trad`].
pub fn sinr_rdm<T: Float + FloatConst>(
    method: RdmMethod,
    x: &RdmSinrInputs<T>,
    trad: Option<(usize, &[TradTerm<T>], T)>,
) -> Option<T> {
    match method {
        RdmMethod::Cc if x.block.na > x.block.ns => Some(sinr_rdm_cc_large_na(x)),
        RdmMethod::Cc => Some(sinr_rdm_cc(x)),
        RdmMethod::CcLargeNa => Some(sinr_rdm_cc_large_na(x)),
        RdmMethod::Sep => Some(sinr_rdm_sep(x)),
        RdmMethod::Trad => trad.map(|(u, terms, w2)| {
            sinr_rdm_trad(
                u,
                terms,
                x.m,
                x.nc,
                w2,
                x.sigma2,
                x.mean_inv_symbol_power,
                x.symbol_power,
            )
        }),
    }
}
