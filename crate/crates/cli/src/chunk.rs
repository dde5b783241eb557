//! Windowing long recordings for decoding.
//!
//! Windows of `window` samples start every `window - overlap` samples. Each
//! window is run through the model whole, so frames near a cut still see
//! acoustic context, but only its kept span is decoded: half the overlap is
//! dropped from the start of every window after the first and from the end of
//! every window before the last. Kept spans tile the recording exactly, so no
//! audio is skipped and none is transcribed twice.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chunk {
    pub start: usize,
    pub end: usize,
    pub keep_start: usize,
    pub keep_end: usize,
}

pub fn plan(total: usize, window: usize, overlap: usize) -> Vec<Chunk> {
    assert!(
        window > 0 && overlap < window,
        "overlap must be shorter than the window"
    );
    let step = window - overlap;
    let mut chunks: Vec<Chunk> = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + window).min(total);
        chunks.push(Chunk {
            start,
            end,
            keep_start: if start == 0 { 0 } else { start + overlap / 2 },
            keep_end: end,
        });
        if end >= total {
            break;
        }
        start += step;
    }
    for i in 1..chunks.len() {
        let next_keep = chunks[i].keep_start;
        chunks[i - 1].keep_end = next_keep;
    }
    chunks
}

/// Frame range of `chunk`'s kept span, given the model's hop and frame count.
pub fn kept_frames(chunk: &Chunk, hop: usize, frames: usize) -> std::ops::Range<usize> {
    let to_frame = |offset: usize| ((offset as f64 / hop as f64).round() as usize).min(frames);
    let lo = to_frame(chunk.keep_start - chunk.start);
    let hi = if chunk.keep_end == chunk.end {
        frames
    } else {
        to_frame(chunk.keep_end - chunk.start)
    };
    lo..hi.max(lo)
}
