//! Manifest text format, version 1.
//!
//! ```text
//! otopipe-manifest v1
//! video <id> <patient> <label> <YYYY-MM> <frame_count> <W>x<H> <fps>
//! frame <video_id> <index> <path> <laplacian|-> <entropy|-> <status>
//! end <video_count> <frame_count>
//! ```
//!
//! Fields are tab-separated. Strings escape `\\`, `\t`, `\n` and `\r` with a
//! backslash. Floats use Rust's shortest round-trip representation. The
//! `end` line makes truncation detectable.

use std::fs;
use std::path::{Path, PathBuf};

use super::{CapturePeriod, ClassLabel, DatasetManifest, FrameRecord, FrameStatus, PatientId, VideoRecord};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "otopipe-manifest v1";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape sequence \\{}", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}

fn opt_f64(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:?}"))
}

pub fn serialize(manifest: &DatasetManifest) -> String {
    let mut out = String::new();
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for v in manifest.videos() {
        out.push_str(&format!(
            "video\t{}\t{}\t{}\t{}\t{}\t{}x{}\t{:?}\n",
            escape(&v.video_id),
            escape(v.patient.as_str()),
            v.label.key(),
            v.capture_period,
            v.frame_count,
            v.resolution.0,
            v.resolution.1,
            v.fps,
        ));
    }
    for f in manifest.frames() {
        out.push_str(&format!(
            "frame\t{}\t{}\t{}\t{}\t{}\t{}\n",
            escape(&f.video_id),
            f.frame_index,
            escape(&f.path.to_string_lossy()),
            opt_f64(f.laplacian_variance),
            opt_f64(f.shannon_entropy),
            f.status.key(),
        ));
    }
    out.push_str(&format!("end\t{}\t{}\n", manifest.videos().len(), manifest.frames().len()));
    out
}

pub fn save(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, serialize(manifest)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        offset: e.utf8_error().valid_up_to() as u64,
        message: "file is not valid UTF-8".into(),
    })?;
    parse(&text, path)
}

/// Parses manifest text. `origin` only labels diagnostics.
pub fn parse(text: &str, origin: &Path) -> Result<DatasetManifest> {
    let mut videos = Vec::new();
    let mut frames = Vec::new();
    let mut offset = 0u64;
    let mut finished = false;

    let fail = |line: usize, offset: u64, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        offset,
        message,
    };

    for (i, raw) in text.split_inclusive('\n').enumerate() {
        let line_no = i + 1;
        let line_offset = offset;
        offset += raw.len() as u64;
        let Some(line) = raw.strip_suffix('\n') else {
            return Err(fail(line_no, line_offset, "truncated line (no terminating newline)".into()));
        };
        if line_no == 1 {
            if line != MANIFEST_HEADER {
                return Err(fail(1, 0, format!("expected header {MANIFEST_HEADER:?}, found {line:?}")));
            }
            continue;
        }
        if finished {
            return Err(fail(line_no, line_offset, "content after end marker".into()));
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let err = |msg: String| fail(line_no, line_offset, msg);
        match fields[0] {
            "video" => videos.push(parse_video(&fields).map_err(err)?),
            "frame" => frames.push(parse_frame(&fields).map_err(err)?),
            "end" => {
                let counts = parse_end(&fields).map_err(err)?;
                if counts != (videos.len(), frames.len()) {
                    return Err(fail(
                        line_no,
                        line_offset,
                        format!(
                            "end marker declares {} videos / {} frames, file holds {} / {}",
                            counts.0,
                            counts.1,
                            videos.len(),
                            frames.len()
                        ),
                    ));
                }
                finished = true;
            }
            other => return Err(err(format!("unknown record type {other:?}"))),
        }
    }
    if text.is_empty() {
        return Err(fail(1, 0, format!("empty file, expected header {MANIFEST_HEADER:?}")));
    }
    if !finished {
        return Err(fail(0, offset, "file truncated: missing end marker".into()));
    }
    Ok(DatasetManifest::new(videos, frames))
}

fn expect_fields(fields: &[&str], n: usize, kind: &str) -> std::result::Result<(), String> {
    if fields.len() != n {
        return Err(format!("{kind} record needs {n} fields, found {}", fields.len()));
    }
    Ok(())
}

fn parse_num<T: std::str::FromStr>(s: &str, field: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("field {field}: cannot parse {s:?}"))
}

fn parse_opt_f64(s: &str, field: &str) -> std::result::Result<Option<f64>, String> {
    if s == "-" {
        Ok(None)
    } else {
        parse_num(s, field).map(Some)
    }
}

fn parse_video(f: &[&str]) -> std::result::Result<VideoRecord, String> {
    expect_fields(f, 8, "video")?;
    let (w, h) = f[6]
        .split_once('x')
        .ok_or_else(|| format!("field resolution: expected WxH, found {:?}", f[6]))?;
    Ok(VideoRecord {
        video_id: unescape(f[1])?,
        patient: PatientId::new(unescape(f[2])?).map_err(|e| e.to_string())?,
        label: f[3].parse::<ClassLabel>().map_err(|e| format!("field label: {e}"))?,
        capture_period: f[4].parse::<CapturePeriod>().map_err(|e| format!("field period: {e}"))?,
        frame_count: parse_num(f[5], "frame_count")?,
        resolution: (parse_num(w, "resolution")?, parse_num(h, "resolution")?),
        fps: parse_num(f[7], "fps")?,
    })
}

fn parse_frame(f: &[&str]) -> std::result::Result<FrameRecord, String> {
    expect_fields(f, 7, "frame")?;
    Ok(FrameRecord {
        video_id: unescape(f[1])?,
        frame_index: parse_num(f[2], "frame_index")?,
        path: PathBuf::from(unescape(f[3])?),
        laplacian_variance: parse_opt_f64(f[4], "laplacian_variance")?,
        shannon_entropy: parse_opt_f64(f[5], "shannon_entropy")?,
        status: f[6].parse::<FrameStatus>().map_err(|e| format!("field status: {e}"))?,
    })
}

fn parse_end(f: &[&str]) -> std::result::Result<(usize, usize), String> {
    expect_fields(f, 3, "end")?;
    Ok((parse_num(f[1], "video_count")?, parse_num(f[2], "frame_count")?))
}
