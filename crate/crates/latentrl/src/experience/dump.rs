//! Optional line-delimited trajectory recording: one JSON record per
//! transition, for offline experiments and debugging.

use std::io::{self, Write};

use serde::Serialize;

use super::Transition;

#[derive(Serialize)]
struct Record<'a> {
    episode: u64,
    step: u32,
    s: &'a [f64],
    a: &'a [f64],
    r: f64,
    terminal: bool,
    timeout: bool,
}

/// Streams transitions as JSON lines to any writer.
pub struct TrajectoryDump<W: Write> {
    out: W,
    episode: u64,
    step: u32,
}

impl<W: Write> TrajectoryDump<W> {
    pub fn new(out: W) -> Self {
        TrajectoryDump {
            out,
            episode: 0,
            step: 0,
        }
    }

    pub fn record(&mut self, t: &Transition) -> io::Result<()> {
        let rec = Record {
            episode: self.episode,
            step: self.step,
            s: &t.obs,
            a: &t.action,
            r: t.reward,
            terminal: t.terminal,
            timeout: t.timeout,
        };
        serde_json::to_writer(&mut self.out, &rec)?;
        self.out.write_all(b"\n")?;
        if t.terminal || t.timeout {
            self.episode += 1;
            self.step = 0;
        } else {
            self.step += 1;
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}
