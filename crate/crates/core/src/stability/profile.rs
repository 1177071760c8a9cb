use std::io::Write;

use serde::{Deserialize, Serialize};

use super::inequality::SampledProfile;
use crate::error::{Error, Result};

/// Shape of an extremal profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileForm {
    /// Rise, plateau, mirrored fall: zero at both ends.
    A1,
    /// Rise then plateau: zero at the left end only.
    A2,
}

/// Power-rise/plateau profile `c (s + b)^{p/(p−1)} + b̃` with `‖f‖_∞ = H`.
///
/// Zero on `[s1, s1′]`, rising on `[s1′, s2′]`, equal to `H` up to `s3′`
/// (or to `s2` for [`ProfileForm::A2`]), falling on `[s3′, s4′]` and zero
/// after that.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerProfile {
    pub form: ProfileForm,
    pub interval: (f64, f64),
    pub breakpoints: (f64, f64, Option<f64>, Option<f64>),
    pub c: f64,
    pub b: f64,
    pub b_tilde: f64,
    /// Plateau height `H`.
    pub plateau: f64,
    pub p: f64,
}

impl MinimizerProfile {
    /// `p/(p−1)`
    fn power(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    fn rise_len(&self) -> f64 {
        self.breakpoints.1 - self.breakpoints.0
    }

    fn plateau_len(&self) -> f64 {
        match self.form {
            ProfileForm::A1 => self.breakpoints.2.unwrap() - self.breakpoints.1,
            ProfileForm::A2 => self.interval.1 - self.breakpoints.1,
        }
    }

    fn n_rises(&self) -> f64 {
        match self.form {
            ProfileForm::A1 => 2.0,
            ProfileForm::A2 => 1.0,
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let (s1p, s2p, s3p, s4p) = self.breakpoints;
        let rise = |t: f64| self.c * t.max(0.0).powf(self.power()) + self.b_tilde;
        if s <= s1p {
            0.0
        } else if s < s2p {
            rise(s + self.b)
        } else {
            match (s3p, s4p) {
                (Some(s3), Some(s4)) if s > s3 => {
                    if s >= s4 {
                        0.0
                    } else {
                        // mirror image of the rise
                        rise(s4 - s)
                    }
                }
                _ => self.plateau,
            }
        }
    }

    pub fn sup(&self) -> f64 {
        self.plateau
    }

    /// `‖f‖_{L¹}` in closed form.
    pub fn l1(&self) -> f64 {
        self.plateau * (self.n_rises() * self.rise_len() / (self.power() + 1.0) + self.plateau_len())
    }

    /// `‖f′‖_{L^q}^q` in closed form.
    pub fn fp(&self, q: f64) -> Result<f64> {
        check_p(q)?;
        let r = self.power();
        let l = self.rise_len();
        let e = (r - 1.0) * q + 1.0;
        Ok(self.n_rises() * (self.c * r).powf(q) * l.powf(e) / e)
    }

    /// Samples `n + 1` equally spaced points of the interval.
    pub fn sample(&self, n: usize) -> SampledProfile {
        let (a, b) = self.interval;
        let nodes: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
        let values = nodes.iter().map(|&s| self.eval(s)).collect();
        SampledProfile { nodes, values }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0) {
        return Err(Error::InvalidArgument(format!("p must be > 1, got {p}")));
    }
    Ok(())
}

/// Extremal profile with `‖f‖_∞ = H` and `‖f‖₁ = S` on `interval`.
///
/// The rise starts at zero slope (`b + s1′ = 0`). When the pure rise of
/// length `S(2p−1)/((p−1)H)` fits, the rest of the interval is zero;
/// otherwise the rise is shortened and a plateau reaching the interval end
/// carries the remaining mass.
pub fn minimizer_profile(form: ProfileForm, interval: (f64, f64), h: f64, s: f64, p: f64) -> Result<MinimizerProfile> {
    check_p(p)?;
    if !p.is_finite() {
        return Err(Error::InvalidArgument("minimizer profiles need finite p".into()));
    }
    let (s1, s2) = interval;
    if !(s2 > s1) {
        return Err(Error::InvalidArgument(format!("empty interval ({s1}, {s2})")));
    }
    if !(h > 0.0 && s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "H and S must be > 0, got H = {h}, S = {s}"
        )));
    }
    let len = s2 - s1;
    if s >= h * len {
        return Err(Error::InvalidArgument(format!(
            "infeasible: S = {s} is not below H·|I| = {}",
            h * len
        )));
    }
    let r = p / (p - 1.0);
    let pure = s * (r + 1.0) / h;
    let rises = match form {
        ProfileForm::A1 => 2.0,
        ProfileForm::A2 => 1.0,
    };
    let (rise, start) = if pure <= len {
        // zero padding first, so the profile still ends on the plateau value
        let rise = pure / rises;
        let start = match form {
            ProfileForm::A1 => s1 + 0.5 * (len - pure),
            ProfileForm::A2 => s2 - pure,
        };
        (rise, start)
    } else {
        // rises plus plateau fill the interval: rises·ℓ·r/(r+1) = |I| − S/H
        ((r + 1.0) * (len - s / h) / (rises * r), s1)
    };
    let breakpoints = match form {
        ProfileForm::A1 => {
            let end = if pure <= len { start + pure } else { s2 };
            (start, start + rise, Some(end - rise), Some(end))
        }
        ProfileForm::A2 => (start, start + rise, None, None),
    };
    Ok(MinimizerProfile {
        form,
        interval,
        breakpoints,
        c: h / rise.powf(r),
        b: -start,
        b_tilde: 0.0,
        plateau: h,
        p,
    })
}

/// Either kind of profile, for [`functional_fp`].
#[derive(Debug, Clone, Copy)]
pub enum ProfileRef<'a> {
    Minimizer(&'a MinimizerProfile),
    Sampled(&'a SampledProfile),
}

impl<'a> From<&'a MinimizerProfile> for ProfileRef<'a> {
    fn from(p: &'a MinimizerProfile) -> Self {
        ProfileRef::Minimizer(p)
    }
}

impl<'a> From<&'a SampledProfile> for ProfileRef<'a> {
    fn from(p: &'a SampledProfile) -> Self {
        ProfileRef::Sampled(p)
    }
}

/// `‖f′‖_{L^p}^p`: closed form for minimizer profiles, `Σ Δs |slope|^p` for sampled ones.
pub fn functional_fp<'a>(f: impl Into<ProfileRef<'a>>, p: f64) -> Result<f64> {
    match f.into() {
        ProfileRef::Minimizer(m) => m.fp(p),
        ProfileRef::Sampled(s) => s.fp(p),
    }
}

/// CSV `s,f` with `n + 1` samples.
pub fn write_profile_csv<W: Write>(mut w: W, profile: &MinimizerProfile, n: usize) -> Result<()> {
    writeln!(w, "s,f")?;
    let sampled = profile.sample(n);
    for (s, f) in sampled.nodes.iter().zip(&sampled.values) {
        writeln!(w, "{s:.17e},{f:.17e}")?;
    }
    Ok(())
}
