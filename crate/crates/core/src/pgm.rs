//! Binary PGM (P5, maxval 255) frame files named `frame_%06d.pgm`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::Frame;

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.samples());
    out
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::MalformedPgm("truncated header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Frame> {
    let mut pos = 0;
    if next_token(bytes, &mut pos)? != "P5" {
        return Err(Error::MalformedPgm("not a binary PGM (P5)".into()));
    }
    let mut num = |what: &str| -> Result<usize> {
        next_token(bytes, &mut pos)?
            .parse()
            .map_err(|_| Error::MalformedPgm(format!("bad {what}")))
    };
    let (w, h, maxval) = (num("width")?, num("height")?, num("maxval")?);
    if maxval != 255 {
        return Err(Error::MalformedPgm(format!("maxval {maxval}, expected 255")));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let end = start + w * h;
    if end > bytes.len() {
        return Err(Error::MalformedPgm("truncated raster".into()));
    }
    Frame::new(w, h, bytes[start..end].to_vec())
}

pub fn read_pgm(path: &Path) -> Result<Frame> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm(path: &Path, frame: &Frame) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pgm(frame))?;
    Ok(())
}

/// Sorted `frame_*.pgm` files of a directory.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("frame_") && n.ends_with(".pgm"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Reads a frame directory; frame `i` gets POC `i` and timestamp
/// `i * frame_us`.
pub fn read_sequence(dir: &Path, frame_us: u64) -> Result<Vec<Frame>> {
    let paths = list_frames(dir)?;
    if paths.is_empty() {
        return Err(Error::NoFrames);
    }
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| Ok(read_pgm(p)?.with_time(i as u32, i as u64 * frame_us)))
        .collect()
}

pub fn write_sequence(dir: &Path, frames: &[Frame]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        write_pgm(&dir.join(frame_file_name(i)), f)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_with_comment() {
        let f = Frame::from_fn(5, 3, |x, y| (x * 40 + y) as u8);
        let bytes = encode_pgm(&f);
        assert_eq!(decode_pgm(&bytes).unwrap(), f);

        let mut commented = b"P5\n# made by hand\n5 3\n255\n".to_vec();
        commented.extend_from_slice(f.samples());
        assert_eq!(decode_pgm(&commented).unwrap(), f);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n65535\n").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x01\x02").is_err());
        assert_eq!(frame_file_name(7), "frame_000007.pgm");
    }
}
