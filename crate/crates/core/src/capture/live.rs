//! Pull-based frame sources.
//!
//! A live adapter hands out raw frames with monotone timestamps. Binding to
//! an OS capture facility is left to the caller; the tailing source follows
//! a pcap file that another process (e.g. `tcpdump -U -w`) keeps appending.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use super::pcap::{PcapError, PcapReader, RawFrame};

#[derive(Debug)]
pub enum FramePoll {
    Frame(RawFrame),
    /// Nothing available yet; poll again later.
    Pending,
    /// The source is exhausted.
    Closed,
}

pub trait FrameSource: Send {
    fn poll_frame(&mut self) -> Result<FramePoll, PcapError>;
}

/// Reads a finished pcap file front to back.
pub struct PcapFileSource {
    reader: PcapReader<BufReader<File>>,
}

impl PcapFileSource {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, PcapError> {
        let file = File::open(path)?;
        Ok(PcapFileSource {
            reader: PcapReader::new(BufReader::with_capacity(1 << 20, file))?,
        })
    }
}

impl FrameSource for PcapFileSource {
    fn poll_frame(&mut self) -> Result<FramePoll, PcapError> {
        Ok(match self.reader.next_frame()? {
            Some(f) => FramePoll::Frame(f),
            None => FramePoll::Closed,
        })
    }
}

/// Follows a pcap file that is still being written.
///
/// Returns [`FramePoll::Pending`] while the writer has not produced a full
/// record, and closes once no new bytes arrived for `idle_timeout`.
pub struct TailingPcapSource {
    path: PathBuf,
    reader: Option<PcapReader<File>>,
    idle_timeout: Duration,
    last_progress: Instant,
    last_ts: u64,
}

impl TailingPcapSource {
    pub fn new(path: impl Into<PathBuf>, idle_timeout: Duration) -> Self {
        TailingPcapSource {
            path: path.into(),
            reader: None,
            idle_timeout,
            last_progress: Instant::now(),
            last_ts: 0,
        }
    }

    fn timed_out(&self) -> bool {
        self.last_progress.elapsed() >= self.idle_timeout
    }

    /// Blocks (sleeping between polls) until a frame arrives or the source
    /// closes.
    pub fn next_blocking(&mut self, poll_interval: Duration) -> Result<Option<RawFrame>, PcapError> {
        loop {
            match self.poll_frame()? {
                FramePoll::Frame(f) => return Ok(Some(f)),
                FramePoll::Closed => return Ok(None),
                FramePoll::Pending => thread::sleep(poll_interval),
            }
        }
    }
}

impl FrameSource for TailingPcapSource {
    fn poll_frame(&mut self) -> Result<FramePoll, PcapError> {
        if self.reader.is_none() {
            // The writer may not have flushed the global header yet.
            let opened = File::open(&self.path)
                .map_err(PcapError::from)
                .and_then(PcapReader::new);
            match opened {
                Ok(r) => {
                    self.reader = Some(r);
                    self.last_progress = Instant::now();
                }
                Err(PcapError::Io(_)) | Err(PcapError::ShortHeader) => {
                    return Ok(if self.timed_out() {
                        FramePoll::Closed
                    } else {
                        FramePoll::Pending
                    });
                }
                Err(e) => return Err(e),
            }
        }
        let reader = self.reader.as_mut().expect("reader opened above");
        match reader.poll_frame()? {
            Some(mut frame) => {
                self.last_progress = Instant::now();
                // Enforce the monotone-timestamp contract of live adapters.
                let ts = frame.timestamp.as_micros().max(self.last_ts);
                self.last_ts = ts;
                frame.timestamp = crate::model::Timestamp::from_micros(ts);
                Ok(FramePoll::Frame(frame))
            }
            None if self.timed_out() => Ok(FramePoll::Closed),
            None => Ok(FramePoll::Pending),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::pcap::PcapWriter;
    use crate::model::Timestamp;
    use std::io::Write;

    #[test]
    fn tail_sees_records_appended_later() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("live.pcap");
        let mut src = TailingPcapSource::new(&path, Duration::from_millis(200));
        // File does not exist yet.
        assert!(matches!(src.poll_frame().unwrap(), FramePoll::Pending));

        let file = File::create(&path).unwrap();
        let mut w = PcapWriter::new(file, 96).unwrap();
        w.write_frame(Timestamp::from_micros(10), &[0; 20], 20).unwrap();
        let mut file = w.into_inner().unwrap();
        let f = src.next_blocking(Duration::from_millis(5)).unwrap().unwrap();
        assert_eq!(f.timestamp.as_micros(), 10);

        // Half a record: still pending, nothing lost.
        let mut rec = Vec::new();
        {
            let mut w2 = PcapWriter::new(Vec::new(), 96).unwrap();
            w2.write_frame(Timestamp::from_micros(5), &[1; 20], 20).unwrap();
            rec.extend_from_slice(&w2.into_inner().unwrap()[24..]);
        }
        file.write_all(&rec[..10]).unwrap();
        file.flush().unwrap();
        assert!(matches!(src.poll_frame().unwrap(), FramePoll::Pending));
        file.write_all(&rec[10..]).unwrap();
        file.flush().unwrap();
        let f = src.next_blocking(Duration::from_millis(5)).unwrap().unwrap();
        // Earlier timestamp is clamped to keep the stream monotone.
        assert_eq!(f.timestamp.as_micros(), 10);
        assert_eq!(f.data, vec![1; 20]);

        assert!(src.next_blocking(Duration::from_millis(20)).unwrap().is_none());
    }
}
