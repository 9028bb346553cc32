//! Structured diagnostics: `LEVEL<TAB>sample_id<TAB>message` on stderr, so
//! batch logs stay machine-parsable. Use "-" when no sample is involved.

use std::fmt::Display;

pub fn warn(sample_id: &str, message: impl Display) {
    eprintln!("WARN\t{sample_id}\t{message}");
}

pub fn error(sample_id: &str, message: impl Display) {
    eprintln!("ERROR\t{sample_id}\t{message}");
}
