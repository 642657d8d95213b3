//! Streaming guarantees of the corpus reader over a million-line source.
//!
//! The source below materializes one line at a time, so a bounded-memory
//! pass over it only succeeds if the reader is actually streaming.

use std::io::{BufReader, Read};

use subtraj_core::corpus::{read_records, ParseMode};

/// Generates `total` JSONL records on the fly, never holding more than one.
struct LineGenerator {
    next: usize,
    total: usize,
    pending: Vec<u8>,
    offset: usize,
}

impl LineGenerator {
    fn new(total: usize) -> Self {
        LineGenerator {
            next: 0,
            total,
            pending: Vec::new(),
            offset: 0,
        }
    }
}

impl Read for LineGenerator {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        if self.offset >= self.pending.len() {
            if self.next >= self.total {
                return Ok(0);
            }
            let i = self.next;
            self.next += 1;
            self.pending = format!(
                "{{\"id\":\"r{i:07}\",\"question\":\"what is {i} plus {i}?\",\"answer\":\"<think>{i}+{i} doubles it.</think>boxed{{{}}}\"}}\n",
                i * 2
            )
            .into_bytes();
            self.offset = 0;
        }
        let n = (self.pending.len() - self.offset).min(buf.len());
        buf[..n].copy_from_slice(&self.pending[self.offset..self.offset + n]);
        self.offset += n;
        Ok(n)
    }
}

#[test]
fn one_million_lines_stream_through() {
    const N: usize = 1_000_000;
    let reader = BufReader::new(LineGenerator::new(N));
    let mut count = 0usize;
    let mut first = None;
    let mut last = None;
    for item in read_records(reader, ParseMode::Strict) {
        let record = item.expect("synthetic corpus is well-formed");
        if first.is_none() {
            first = Some(record.id.clone());
        }
        last = Some(record.id);
        count += 1;
    }
    assert_eq!(count, N);
    assert_eq!(first.as_deref(), Some("r0000000"));
    assert_eq!(last.as_deref(), Some("r0999999"));
}

#[test]
fn early_stop_reads_only_what_it_needs() {
    // Taking 3 records from a million-line source must not consume the rest.
    let generator = LineGenerator::new(1_000_000);
    let reader = BufReader::new(generator);
    let mut it = read_records(reader, ParseMode::Strict);
    for _ in 0..3 {
        it.next().unwrap().unwrap();
    }
    let consumed = it.lines_read();
    assert!(consumed <= 4, "reader consumed {consumed} lines for 3 records");
}
