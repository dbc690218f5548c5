//! Preprocessing and dense segmentation of continuous recordings.
//!
//! The stage order for the standard pipeline is band-pass → resample →
//! sliding-window segmentation → overlap labeling → balanced subsampling.
//! All functions are pure; callers may parallelize across recordings.

#[allow(unused_imports)] // no_std builds need the trait; std test builds shadow it with inherent methods
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{EventAnnotation, Segment};

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("recording {subject_id}: invalid shape or sampling rate")]
    BadRecording { subject_id: String },
    #[error("recording {subject_id}: non-finite sample")]
    NonFinite { subject_id: String },
    #[error("band edges {lo}..{hi} Hz violate 0 < lo < hi < fs/2 (fs = {fs})")]
    BadBand { lo: f64, hi: f64, fs: f64 },
    #[error("target rate {0} Hz must be positive")]
    BadRate(f64),
    #[error("invalid segmentation config")]
    BadSegmentationConfig,
    #[error("recording has {samples} samples, shorter than one {window} sample window")]
    TooShort { samples: usize, window: usize },
    #[error("class {label} has {available} segments, fewer than per_class {requested}")]
    NotEnoughMembers {
        label: u8,
        available: usize,
        requested: usize,
    },
}

/// Continuous multichannel recording, channel-major like [`Segment`].
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub fs: f64,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Recording {
    pub fn new(
        subject_id: String,
        fs: f64,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self, SignalError> {
        if !(fs > 0.0) || channels == 0 || data.is_empty() || data.len() % channels != 0 {
            return Err(SignalError::BadRecording { subject_id });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite { subject_id });
        }
        Ok(Recording {
            subject_id,
            fs,
            channels,
            data,
        })
    }

    /// Samples per channel.
    pub fn samples(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let t = self.samples();
        &self.data[c * t..(c + 1) * t]
    }
}

/// Sliding-window parameters. Defaults: 5 s window, 0.05 s stride, and
/// `min_overlap_s = 0`, i.e. any positive-length event overlap labels a
/// window positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationConfig {
    pub window_s: f64,
    pub stride_s: f64,
    pub min_overlap_s: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            window_s: 5.0,
            stride_s: 0.05,
            min_overlap_s: 0.0,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<(), SignalError> {
        let ok = self.window_s > 0.0
            && self.stride_s > 0.0
            && self.stride_s <= self.window_s
            && self.min_overlap_s >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(SignalError::BadSegmentationConfig)
        }
    }
}

/// Designs the linear-phase windowed-sinc band-pass used by [`bandpass`]:
/// Hamming window, length `4·fs/lo` rounded up to odd. Exposed so tests can
/// inspect the kernel directly.
pub fn design_bandpass(fs: f64, lo: f64, hi: f64) -> Result<Vec<f64>, SignalError> {
    if !(lo > 0.0 && lo < hi && hi < fs / 2.0) {
        return Err(SignalError::BadBand { lo, hi, fs });
    }
    let mut len = (4.0 * fs / lo).round() as usize;
    if len % 2 == 0 {
        len += 1;
    }
    let len = len.max(3);
    let mid = (len - 1) as f64 / 2.0;
    let (wl, wh) = (
        2.0 * core::f64::consts::PI * lo / fs,
        2.0 * core::f64::consts::PI * hi / fs,
    );
    let mut taps = Vec::with_capacity(len);
    for n in 0..len {
        let x = n as f64 - mid;
        let ideal = if x == 0.0 {
            (wh - wl) / core::f64::consts::PI
        } else {
            ((wh * x).sin() - (wl * x).sin()) / (core::f64::consts::PI * x)
        };
        let hamming = 0.54 - 0.46 * (2.0 * core::f64::consts::PI * n as f64 / (len - 1) as f64).cos();
        taps.push(ideal * hamming);
    }
    Ok(taps)
}

/// Zero-shift FIR band-pass. Each channel is edge-padded by half the kernel
/// on both sides, so output length equals input length and the pass band is
/// not delayed.
pub fn bandpass(rec: &Recording, lo: f64, hi: f64) -> Result<Recording, SignalError> {
    let taps = design_bandpass(rec.fs, lo, hi)?;
    let half = taps.len() / 2;
    let t = rec.samples();
    let mut out = Vec::with_capacity(rec.data.len());
    let mut padded = Vec::with_capacity(t + 2 * half);
    for c in 0..rec.channels {
        let x = rec.channel(c);
        padded.clear();
        padded.extend(core::iter::repeat(x[0] as f64).take(half));
        padded.extend(x.iter().map(|&v| v as f64));
        padded.extend(core::iter::repeat(x[t - 1] as f64).take(half));
        for i in 0..t {
            let window = &padded[i..i + taps.len()];
            let acc: f64 = taps.iter().zip(window).map(|(h, v)| h * v).sum();
            out.push(acc as f32);
        }
    }
    Ok(Recording {
        subject_id: rec.subject_id.clone(),
        fs: rec.fs,
        channels: rec.channels,
        data: out,
    })
}

/// Linear-interpolation resampler. Output length is `round(T·fs_out/fs)`.
/// When downsampling, run [`bandpass`] first; the 0.5–50 Hz pipeline band
/// already limits content below any target Nyquist used here.
pub fn resample(rec: &Recording, fs_out: f64) -> Result<Recording, SignalError> {
    if !(fs_out > 0.0) {
        return Err(SignalError::BadRate(fs_out));
    }
    if fs_out == rec.fs {
        return Ok(rec.clone());
    }
    let t_in = rec.samples();
    let t_out = ((t_in as f64) * fs_out / rec.fs).round().max(1.0) as usize;
    let step = rec.fs / fs_out;
    let mut out = Vec::with_capacity(rec.channels * t_out);
    for c in 0..rec.channels {
        let x = rec.channel(c);
        for k in 0..t_out {
            let pos = k as f64 * step;
            let i = (pos.floor() as usize).min(t_in - 1);
            let frac = pos - i as f64;
            let v = if i + 1 < t_in {
                (1.0 - frac) * x[i] as f64 + frac * x[i + 1] as f64
            } else {
                x[t_in - 1] as f64
            };
            out.push(v as f32);
        }
    }
    Ok(Recording {
        subject_id: rec.subject_id.clone(),
        fs: fs_out,
        channels: rec.channels,
        data: out,
    })
}

/// Number of sliding windows for `t` samples, window `w`, stride `s`:
/// `floor((t − w)/s) + 1`.
pub fn window_count(t: usize, w: usize, s: usize) -> usize {
    if t < w {
        0
    } else {
        (t - w) / s + 1
    }
}

/// Cuts a recording into unlabeled fixed-length windows. Window `k` spans
/// samples `[k·S, k·S + W)` and is stamped with its start time; ids are
/// `{subject_id}-{start_sample}`.
pub fn segment(rec: &Recording, cfg: &SegmentationConfig) -> Result<Vec<Segment>, SignalError> {
    cfg.validate()?;
    let w = (cfg.window_s * rec.fs).round() as usize;
    let s = (cfg.stride_s * rec.fs).round() as usize;
    let t = rec.samples();
    if w == 0 || s == 0 || t < w {
        return Err(SignalError::TooShort {
            samples: t,
            window: w.max(1),
        });
    }
    let n = window_count(t, w, s);
    let mut segments = Vec::with_capacity(n);
    for k in 0..n {
        let start = k * s;
        let mut data = Vec::with_capacity(rec.channels * w);
        for c in 0..rec.channels {
            data.extend_from_slice(&rec.channel(c)[start..start + w]);
        }
        segments.push(Segment {
            id: format!("{}-{}", rec.subject_id, start),
            subject_id: rec.subject_id.clone(),
            start_s: start as f64 / rec.fs,
            channels: rec.channels,
            samples: w,
            data,
            label: 0,
        });
    }
    Ok(segments)
}

/// Overlap length between half-open intervals `[a0, a1)` and `[b0, b1)`.
fn interval_overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Labels each window 1 iff it overlaps an event of the same subject by
/// strictly more than `cfg.min_overlap_s`. Intervals are half-open, so a
/// window that merely touches an event boundary stays negative.
pub fn label_segments(
    segments: &mut [Segment],
    events: &[EventAnnotation],
    cfg: &SegmentationConfig,
) {
    for seg in segments.iter_mut() {
        let w0 = seg.start_s;
        let w1 = seg.start_s + cfg.window_s;
        let hit = events.iter().any(|e| {
            e.subject_id == seg.subject_id
                && interval_overlap(w0, w1, e.onset_s, e.offset_s) > cfg.min_overlap_s
        });
        seg.label = if hit { 1 } else { 0 };
    }
}

/// Draws exactly `per_class` segments of each label without replacement,
/// deterministically for a given seed. The selection keeps the input order.
pub fn balanced_subsample(
    segments: Vec<Segment>,
    per_class: usize,
    seed: u64,
) -> Result<Vec<Segment>, SignalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = alloc::vec![false; segments.len()];
    for label in [0u8, 1u8] {
        let members: Vec<usize> = segments
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label)
            .map(|(i, _)| i)
            .collect();
        if members.len() < per_class {
            return Err(SignalError::NotEnoughMembers {
                label,
                available: members.len(),
                requested: per_class,
            });
        }
        for idx in rand::seq::index::sample(&mut rng, members.len(), per_class) {
            keep[members[idx]] = true;
        }
    }
    Ok(segments
        .into_iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(s, _)| s)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn sine(fs: f64, freq: f64, secs: f64, amp: f64) -> Vec<f32> {
        let n = (fs * secs) as usize;
        (0..n)
            .map(|i| (amp * (2.0 * core::f64::consts::PI * freq * i as f64 / fs).sin()) as f32)
            .collect()
    }

    fn rec(fs: f64, channels: usize, per_channel: Vec<f32>) -> Recording {
        let mut data = Vec::new();
        for _ in 0..channels {
            data.extend_from_slice(&per_channel);
        }
        Recording::new("s1".to_string(), fs, channels, data).unwrap()
    }

    fn rms(x: &[f32]) -> f64 {
        (x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn bandpass_zeros_stay_zero() {
        let r = rec(500.0, 2, vec![0.0; 5000]);
        let out = bandpass(&r, 0.5, 50.0).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bandpass_passband_gain_near_unity() {
        // 10 Hz sits inside 0.5–50; measure RMS over the steady-state middle.
        let fs = 500.0;
        let r = rec(fs, 1, sine(fs, 10.0, 40.0, 1.0));
        let out = bandpass(&r, 0.5, 50.0).unwrap();
        let t = out.samples();
        let mid = &out.channel(0)[t / 4..3 * t / 4];
        let gain = rms(mid) / rms(&r.channel(0)[t / 4..3 * t / 4]);
        assert!((gain - 1.0).abs() < 0.05, "gain {gain}");
    }

    #[test]
    fn bandpass_stopband_attenuated() {
        let fs = 500.0;
        let r = rec(fs, 1, sine(fs, 100.0, 40.0, 1.0));
        let out = bandpass(&r, 0.5, 50.0).unwrap();
        let t = out.samples();
        let gain = rms(&out.channel(0)[t / 4..3 * t / 4])
            / rms(&r.channel(0)[t / 4..3 * t / 4]);
        assert!(gain < 0.1, "expected >=20 dB attenuation, gain {gain}");
    }

    #[test]
    fn bandpass_rejects_bad_edges() {
        let r = rec(500.0, 1, vec![0.0; 100]);
        assert!(bandpass(&r, 0.0, 50.0).is_err());
        assert!(bandpass(&r, 50.0, 0.5).is_err());
        assert!(bandpass(&r, 0.5, 300.0).is_err());
    }

    #[test]
    fn resample_identity_is_bitwise() {
        let r = rec(500.0, 2, sine(500.0, 7.0, 2.0, 3.0));
        let out = resample(&r, 500.0).unwrap();
        assert_eq!(out.data, r.data);
    }

    #[test]
    fn resample_constant_stays_constant() {
        let r = rec(250.0, 1, vec![3.0; 1000]);
        let out = resample(&r, 400.0).unwrap();
        assert_eq!(out.samples(), 1600);
        assert!(out.data.iter().all(|&v| (v - 3.0).abs() < 1e-6));
    }

    #[test]
    fn resample_ramp_matches_closed_form() {
        // Ramp 0..1 over 1000 samples at 1000 Hz, downsampled to 500 Hz:
        // output k sits exactly on input sample 2k.
        let ramp: Vec<f32> = (0..1000).map(|i| i as f32 / 999.0).collect();
        let r = rec(1000.0, 1, ramp);
        let out = resample(&r, 500.0).unwrap();
        assert_eq!(out.samples(), 500);
        for (k, &v) in out.channel(0).iter().enumerate() {
            let expect = (2 * k) as f64 / 999.0;
            assert!((v as f64 - expect).abs() < 1e-6, "k={k}");
        }
    }

    #[test]
    fn segment_counts_match_formula() {
        let cfg = SegmentationConfig::default();
        // 5 s at 500 Hz: exactly one 19x2500 window.
        let r = rec(500.0, 19, vec![1.0; 2500]);
        let segs = segment(&r, &cfg).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].channels, segs[0].samples), (19, 2500));
        // 6 s: floor((3000-2500)/25)+1 = 21.
        let r = rec(500.0, 2, vec![1.0; 3000]);
        assert_eq!(segment(&r, &cfg).unwrap().len(), 21);
        // stride = window tiles a 10 s recording into 2 windows.
        let tiled = SegmentationConfig {
            window_s: 5.0,
            stride_s: 5.0,
            min_overlap_s: 0.0,
        };
        let r = rec(500.0, 1, vec![1.0; 5000]);
        assert_eq!(segment(&r, &tiled).unwrap().len(), 2);
    }

    #[test]
    fn segment_too_short_errors() {
        let r = rec(500.0, 1, vec![1.0; 2499]);
        assert!(matches!(
            segment(&r, &SegmentationConfig::default()),
            Err(SignalError::TooShort { .. })
        ));
    }

    fn event(onset: f64, offset: f64) -> EventAnnotation {
        EventAnnotation {
            subject_id: "s1".to_string(),
            onset_s: onset,
            offset_s: offset,
            kind: "ied".to_string(),
        }
    }

    fn window_at(start: f64) -> Segment {
        Segment {
            id: "w".to_string(),
            subject_id: "s1".to_string(),
            start_s: start,
            channels: 1,
            samples: 1,
            data: vec![0.0],
            label: 0,
        }
    }

    #[test]
    fn labeling_overlap_cases() {
        let cfg = SegmentationConfig::default();
        let mut segs = vec![window_at(8.0), window_at(0.0), window_at(5.0)];
        label_segments(&mut segs, &[event(10.0, 10.2)], &cfg);
        // [8,13) overlaps, [0,5) is disjoint, [5,10) touches the onset only.
        assert_eq!(
            segs.iter().map(|s| s.label).collect::<Vec<_>>(),
            vec![1, 0, 0]
        );
    }

    #[test]
    fn labeling_respects_subject() {
        let cfg = SegmentationConfig::default();
        let mut segs = vec![window_at(8.0)];
        let mut e = event(10.0, 10.2);
        e.subject_id = "other".to_string();
        label_segments(&mut segs, &[e], &cfg);
        assert_eq!(segs[0].label, 0);
    }

    #[test]
    fn labeling_is_order_independent() {
        let cfg = SegmentationConfig::default();
        let events = vec![event(1.0, 1.5), event(9.0, 9.1), event(30.0, 31.0)];
        let mut rev = events.clone();
        rev.reverse();
        let starts: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let mut a: Vec<Segment> = starts.iter().map(|&s| window_at(s)).collect();
        let mut b = a.clone();
        label_segments(&mut a, &events, &cfg);
        label_segments(&mut b, &rev, &cfg);
        assert_eq!(
            a.iter().map(|s| s.label).collect::<Vec<_>>(),
            b.iter().map(|s| s.label).collect::<Vec<_>>()
        );
    }

    #[test]
    fn balanced_subsample_counts_and_determinism() {
        let mut segs = Vec::new();
        for i in 0..10 {
            let mut s = window_at(i as f64);
            s.id = format!("p{i}");
            s.label = 1;
            segs.push(s);
            let mut s = window_at(i as f64);
            s.id = format!("n{i}");
            segs.push(s);
        }
        let a = balanced_subsample(segs.clone(), 2, 7).unwrap();
        assert_eq!(a.iter().filter(|s| s.label == 1).count(), 2);
        assert_eq!(a.iter().filter(|s| s.label == 0).count(), 2);
        let b = balanced_subsample(segs.clone(), 2, 7).unwrap();
        assert_eq!(
            a.iter().map(|s| &s.id).collect::<Vec<_>>(),
            b.iter().map(|s| &s.id).collect::<Vec<_>>()
        );
        assert!(matches!(
            balanced_subsample(segs, 11, 7),
            Err(SignalError::NotEnoughMembers { .. })
        ));
    }
}
