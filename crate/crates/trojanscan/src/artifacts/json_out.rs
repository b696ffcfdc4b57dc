//! Minimal JSON emitter for the fixed artifact schemas.
//!
//! Artifacts are rewritten byte-for-byte on reruns, so emission is fully
//! hand-ordered and floats are printed at 17 significant digits (enough to
//! round-trip any f64 exactly). Parsing stays on serde_json.

/// 17 significant digits: one leading digit plus 16 after the point.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct JsonBuf {
    out: String,
}

impl JsonBuf {
    pub fn new() -> Self {
        JsonBuf { out: String::new() }
    }

    pub fn raw(&mut self, s: &str) -> &mut Self {
        self.out.push_str(s);
        self
    }

    pub fn string(&mut self, s: &str) -> &mut Self {
        self.out.push('"');
        for ch in s.chars() {
            match ch {
                '"' => self.out.push_str("\\\""),
                '\\' => self.out.push_str("\\\\"),
                '\n' => self.out.push_str("\\n"),
                '\r' => self.out.push_str("\\r"),
                '\t' => self.out.push_str("\\t"),
                c if (c as u32) < 0x20 => {
                    self.out.push_str(&format!("\\u{:04x}", c as u32));
                }
                c => self.out.push(c),
            }
        }
        self.out.push('"');
        self
    }

    pub fn float(&mut self, v: f64) -> &mut Self {
        self.out.push_str(&fmt_f64(v));
        self
    }

    pub fn float_array(&mut self, vs: &[f64]) -> &mut Self {
        self.out.push('[');
        for (i, v) in vs.iter().enumerate() {
            if i > 0 {
                self.out.push(',');
            }
            self.out.push_str(&fmt_f64(*v));
        }
        self.out.push(']');
        self
    }

    pub fn usize_array(&mut self, vs: &[usize]) -> &mut Self {
        self.out.push('[');
        for (i, v) in vs.iter().enumerate() {
            if i > 0 {
                self.out.push(',');
            }
            self.out.push_str(&v.to_string());
        }
        self.out.push(']');
        self
    }

    pub fn finish(self) -> String {
        self.out
    }
}

impl Default for JsonBuf {
    fn default() -> Self {
        Self::new()
    }
}
