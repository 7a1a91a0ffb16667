//! Toy thermal detector served over the line protocol on stdin/stdout.

use std::io::{self, BufWriter};

use hotcold::detector::{protocol, ToyDetector};

fn main() -> io::Result<()> {
    let stdin = io::stdin().lock();
    let stdout = BufWriter::new(io::stdout().lock());
    protocol::serve(&ToyDetector::default(), stdin, stdout)
}
