use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use anyhow::Context;

/// Non-blank lines of a JSONL file with their 1-based line numbers.
pub struct JsonLines {
    lines: io::Lines<BufReader<File>>,
    number: usize,
}

impl JsonLines {
    pub fn open(path: &Path) -> anyhow::Result<Self> {
        let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
        Ok(JsonLines {
            lines: BufReader::new(file).lines(),
            number: 0,
        })
    }
}

impl Iterator for JsonLines {
    type Item = io::Result<(usize, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.number += 1;
            match line {
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => return Some(Ok((self.number, l))),
                Err(e) => return Some(Err(e)),
            }
        }
    }
}
