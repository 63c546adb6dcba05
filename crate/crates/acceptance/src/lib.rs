//! Holds no code; the suite lives in `tests/acceptance.rs`.
