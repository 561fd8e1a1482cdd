//! Brute-force reference implementations and fixture builders shared by the
//! integration tests and the acceptance suite. Each oracle follows the
//! textbook definition directly and shares no code with the library.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use otopipe::imaging::GrayImage;
use otopipe::manifest::{CapturePeriod, ClassLabel, DatasetManifest, FrameRecord, PatientId, VideoRecord};
use otopipe::rng::SplitMix64;

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

pub fn random_image(rng: &mut SplitMix64, w: usize, h: usize) -> GrayImage {
    // Mix of flat, smooth and noisy content so every kernel branch is hit.
    let style = rng.below(3);
    let base = rng.below(256) as i64;
    GrayImage::from_fn(w, h, |x, y| match style {
        0 => rng.below(256) as u8,
        1 => ((base + 7 * x as i64 + 3 * y as i64) % 256) as u8,
        _ => {
            if rng.below(8) == 0 {
                rng.below(256) as u8
            } else {
                base as u8
            }
        }
    })
    .unwrap()
}

// --- image kernels --------------------------------------------------------

/// Population variance of the 4-neighbour Laplacian, edges replicated.
pub fn laplacian_variance_oracle(img: &GrayImage) -> f64 {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let px = |x: i64, y: i64| f64::from(img.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize));
    let mut responses = Vec::new();
    for y in 0..h {
        for x in 0..w {
            responses.push(px(x - 1, y) + px(x + 1, y) + px(x, y - 1) + px(x, y + 1) - 4.0 * px(x, y));
        }
    }
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    responses.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n
}

/// Shannon entropy in bits of the grey-level histogram.
pub fn entropy_oracle(img: &GrayImage) -> f64 {
    let mut counts = vec![0u64; 256];
    for y in 0..img.height() {
        for x in 0..img.width() {
            counts[img.get(x, y) as usize] += 1;
        }
    }
    let n = (img.width() * img.height()) as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// 32x32 box thumbnail: output cell `i` averages source pixels
/// `floor(i*S/32) .. max(ceil((i+1)*S/32), floor(i*S/32)+1)`, rounded half up.
pub fn thumbnail_oracle(img: &GrayImage) -> Vec<u8> {
    let range = |i: usize, src: usize| {
        let start = i * src / 32;
        let end = ((i + 1) * src).div_ceil(32).max(start + 1).min(src);
        start..end
    };
    let mut out = Vec::with_capacity(1024);
    for ty in 0..32 {
        for tx in 0..32 {
            let mut sum = 0u64;
            let mut count = 0u64;
            for y in range(ty, img.height()) {
                for x in range(tx, img.width()) {
                    sum += u64::from(img.get(x, y));
                    count += 1;
                }
            }
            out.push(((2 * sum + count) / (2 * count)) as u8);
        }
    }
    out
}

/// Average hash: bit `8*row + col` is set when the mean of that 4x4 block
/// of the thumbnail exceeds the mean of the whole thumbnail.
pub fn hash_oracle(thumb: &[u8]) -> u64 {
    let total: u64 = thumb.iter().map(|&v| u64::from(v)).sum();
    let mut bits = 0u64;
    for row in 0..8 {
        for col in 0..8 {
            let mut block = 0u64;
            for dy in 0..4 {
                for dx in 0..4 {
                    block += u64::from(thumb[(row * 4 + dy) * 32 + col * 4 + dx]);
                }
            }
            // block/16 > total/1024
            if block * 1024 > total * 16 {
                bits |= 1 << (row * 8 + col);
            }
        }
    }
    bits
}

pub fn hamming_oracle(a: u64, b: u64) -> u32 {
    (0..64).filter(|i| (a >> i) & 1 != (b >> i) & 1).count() as u32
}

// --- classification metrics --------------------------------------------------

/// Exact squared MCC with its sign, from per-sample one-hot vectors:
/// `cov(X,Y) / sqrt(cov(X,X) cov(Y,Y))`. Returns `None` when a variance is 0.
pub fn mcc_oracle(truth: &[usize], pred: &[usize], classes: usize) -> Option<(BigRational, bool)> {
    let n = BigRational::from_integer(BigInt::from(truth.len()));
    let one_hot = |labels: &[usize]| -> Vec<Vec<BigRational>> {
        labels
            .iter()
            .map(|&l| (0..classes).map(|k| BigRational::from_integer(BigInt::from((l == k) as i32))).collect())
            .collect()
    };
    let (x, y) = (one_hot(pred), one_hot(truth));
    let mean = |v: &Vec<Vec<BigRational>>, k: usize| v.iter().map(|r| r[k].clone()).sum::<BigRational>() / &n;
    let cov = |a: &Vec<Vec<BigRational>>, b: &Vec<Vec<BigRational>>| {
        let mut total = BigRational::zero();
        for k in 0..classes {
            let (ma, mb) = (mean(a, k), mean(b, k));
            for i in 0..a.len() {
                total += (&a[i][k] - &ma) * (&b[i][k] - &mb);
            }
        }
        total
    };
    let cxy = cov(&x, &y);
    let denom = cov(&x, &x) * cov(&y, &y);
    if denom.is_zero() {
        return None;
    }
    Some((&cxy * &cxy / denom, cxy.is_negative()))
}

/// AUC as the share of (positive, negative) pairs ranked correctly, ties
/// counting one half. `None` without both kinds of sample.
pub fn auc_oracle(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut wins2 = 0u64;
    let mut pairs = 0u64;
    for (i, &p) in positive.iter().enumerate() {
        if !p {
            continue;
        }
        for (j, &q) in positive.iter().enumerate() {
            if q {
                continue;
            }
            pairs += 1;
            wins2 += match scores[i].partial_cmp(&scores[j]).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    (pairs > 0).then(|| wins2 as f64 / (2 * pairs) as f64)
}

// --- ANOVA ---------------------------------------------------------------------

pub struct ExactSs {
    pub sample: BigRational,
    pub columns: BigRational,
    pub interaction: BigRational,
    pub within: BigRational,
    pub total: BigRational,
}

fn q(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Definitional sums of squares in exact rational arithmetic, from raw
/// `values[row][col][rep]` (balanced).
pub fn anova_oracle(values: &[Vec<Vec<f64>>]) -> ExactSs {
    let a = values.len();
    let b = values[0].len();
    let n = values[0][0].len();
    let int = |k: usize| BigRational::from_integer(BigInt::from(k));
    let cell_mean = |i: usize, j: usize| values[i][j].iter().map(|&v| q(v)).sum::<BigRational>() / int(n);
    let cells: Vec<Vec<BigRational>> = (0..a).map(|i| (0..b).map(|j| cell_mean(i, j)).collect()).collect();
    let row: Vec<BigRational> = (0..a).map(|i| cells[i].iter().cloned().sum::<BigRational>() / int(b)).collect();
    let col: Vec<BigRational> = (0..b).map(|j| (0..a).map(|i| cells[i][j].clone()).sum::<BigRational>() / int(a)).collect();
    let grand = row.iter().cloned().sum::<BigRational>() / int(a);
    let sq = |x: BigRational| &x * &x;
    let sample = int(b * n) * row.iter().map(|r| sq(r - &grand)).sum::<BigRational>();
    let columns = int(a * n) * col.iter().map(|c| sq(c - &grand)).sum::<BigRational>();
    let mut interaction = BigRational::zero();
    let mut within = BigRational::zero();
    let mut total = BigRational::zero();
    for i in 0..a {
        for j in 0..b {
            interaction += int(n) * sq(&cells[i][j] - &row[i] - &col[j] + &grand);
            for &v in &values[i][j] {
                within += sq(q(v) - &cells[i][j]);
                total += sq(q(v) - &grand);
            }
        }
    }
    ExactSs {
        sample,
        columns,
        interaction,
        within,
        total,
    }
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap()
}

// --- manifests -----------------------------------------------------------------

pub fn video(id: &str, patient: &str, label: ClassLabel, frames: u32) -> VideoRecord {
    VideoRecord {
        video_id: id.into(),
        patient: PatientId::new(patient).unwrap(),
        label,
        capture_period: CapturePeriod { year: 2022, month: 3 },
        frame_count: frames,
        resolution: VideoRecord::DEFAULT_RESOLUTION,
        fps: VideoRecord::DEFAULT_FPS,
    }
}

/// Random manifest with `patients` patients, one to three videos each and
/// unequal frame counts. Labels are drawn so that every label in use has at
/// least two patients (or a single label is used), which keeps the grouped
/// split's train-side class coverage satisfiable.
pub fn random_manifest(rng: &mut SplitMix64, patients: usize) -> DatasetManifest {
    let used = if patients < 4 { 1 } else { 1 + rng.below(4.min(patients as u64 / 2)) as usize };
    let mut labels: Vec<ClassLabel> = (0..patients).map(|p| ClassLabel::ALL[p % used]).collect();
    rng.shuffle(&mut labels);
    let mut videos = Vec::new();
    let mut frames = Vec::new();
    for (p, label) in labels.into_iter().enumerate() {
        for v in 0..=rng.below(3) {
            let id = format!("p{p}v{v}");
            let n = 1 + rng.below(40) as u32;
            videos.push(video(&id, &format!("p{p}"), label, n));
            frames.extend((0..n).map(|i| FrameRecord::new(id.clone(), i, format!("{id}/{i}.pgm"))));
        }
    }
    DatasetManifest::new(videos, frames)
}
