//! Render a synthetic clip, write it as raw 10-bit 4:2:0 and read it back.
//!
//!     cargo run --example raw_video -- /tmp/clip.yuv

use paqe::frame_io::{frame_byte_size, read_raw_video, write_raw_video};
use paqe::synth::{generate_clip, ClipSpec};

fn main() -> paqe::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "clip_64x64.yuv".into());
    let clip = generate_clip(&ClipSpec::new(64, 64, 9, 7));
    let bytes = write_raw_video(&clip, &path)?;
    println!("{} frames, {} bytes ({} per frame)", clip.len(), bytes, frame_byte_size(64, 64));
    let back = read_raw_video(&path, 64, 64)?;
    assert_eq!(back, clip);
    println!("read back identical from {path}");
    Ok(())
}
