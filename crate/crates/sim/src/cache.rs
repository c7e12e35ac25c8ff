//! Synthesis cache: in-memory map keyed by a hash of the synthesis inputs,
//! with a plain-text file form for the `synthesize` subcommand.
//!
//! ```text
//! rsca-synthesis 1
//! key <sha256 hex>
//! config <v_x> <ts> <d> <epsilon> <psi_bound> <R/2> <w> <q> <r>
//! mrpi <s> <alpha> <slack>
//! mat a 4 4
//! ...
//! vec b 4
//! ...
//! set z
//! polytope 4 66
//! ...
//! ```

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context};
use rsca_core::invariant_sets::{synthesize, GainSynthesis, Synthesis, SynthesisConfig, TubeSets};
use rsca_core::linalg::Mat;
use rsca_core::polytope::Polytope;
use rsca_core::vehicle_model::DiscreteModel;
use sha2::{Digest, Sha256};

const MAGIC: &str = "rsca-synthesis 1";

fn config_line(c: &SynthesisConfig<f64>) -> String {
    format!(
        "{:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?}",
        c.v_x, c.ts, c.disturbance_bound, c.epsilon, c.psi_bound, c.road_half_width, c.car_width, c.q_weight, c.r_weight
    )
}

pub fn cache_key(c: &SynthesisConfig<f64>) -> String {
    let mut h = Sha256::new();
    h.update(MAGIC.as_bytes());
    h.update(config_line(c).as_bytes());
    hex::encode(h.finalize())
}

#[derive(Default)]
pub struct SynthesisCache {
    map: Mutex<HashMap<String, Arc<Synthesis<f64>>>>,
}

impl SynthesisCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, syn: Synthesis<f64>) -> Arc<Synthesis<f64>> {
        let key = cache_key(&syn.config);
        let arc = Arc::new(syn);
        self.map.lock().expect("cache lock").insert(key, arc.clone());
        arc
    }

    /// Cached synthesis for `cfg`, computing it on a miss. Two threads
    /// missing on the same key both compute; the results are identical.
    pub fn get_or_synthesize(&self, cfg: &SynthesisConfig<f64>) -> anyhow::Result<Arc<Synthesis<f64>>> {
        let key = cache_key(cfg);
        if let Some(s) = self.map.lock().expect("cache lock").get(&key) {
            return Ok(s.clone());
        }
        let syn = Arc::new(synthesize(cfg).with_context(|| format!("synthesis at v_x = {} m/s, d = {}", cfg.v_x, cfg.disturbance_bound))?);
        self.map.lock().expect("cache lock").entry(key).or_insert_with(|| syn.clone());
        Ok(syn)
    }

    /// Loads a synthesis file into the cache; returns its key.
    pub fn load_file(&self, path: &Path) -> anyhow::Result<String> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let syn = from_text(&text).with_context(|| format!("parsing {}", path.display()))?;
        let key = cache_key(&syn.config);
        self.insert(syn);
        Ok(key)
    }
}

fn push_mat(out: &mut String, name: &str, m: &Mat<f64>) {
    out.push_str(&format!("mat {name} {} {}\n", m.rows(), m.cols()));
    for r in m.row_iter() {
        out.push_str(&r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" "));
        out.push('\n');
    }
}

fn push_vec(out: &mut String, name: &str, v: &[f64]) {
    out.push_str(&format!("vec {name} {}\n", v.len()));
    out.push_str(&v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" "));
    out.push('\n');
}

fn push_set(out: &mut String, name: &str, p: &Polytope<f64>) {
    out.push_str(&format!("set {name}\n"));
    out.push_str(&p.to_text());
}

pub fn to_text(s: &Synthesis<f64>) -> String {
    let mut out = format!("{MAGIC}\nkey {}\nconfig {}\n", cache_key(&s.config), config_line(&s.config));
    out.push_str(&format!("mrpi {} {:?} {:?}\n", s.mrpi_s, s.mrpi_alpha, s.z_slack));
    push_mat(&mut out, "a", &s.model.a);
    push_vec(&mut out, "b", &s.model.b);
    push_vec(&mut out, "e", &s.model.e);
    push_vec(&mut out, "k", &s.gain.k_gain);
    push_mat(&mut out, "p", &s.gain.p_weight);
    push_mat(&mut out, "a_k", &s.gain.a_k);
    push_set(&mut out, "d", &s.d_set);
    push_set(&mut out, "w", &s.w);
    push_set(&mut out, "z", &s.tubes.z);
    push_set(&mut out, "terminal_top", &s.tubes.x_terminal_top);
    push_set(&mut out, "terminal_bottom", &s.tubes.x_terminal_bottom);
    push_set(&mut out, "u_supervisor", &s.tubes.u_tight_supervisor);
    push_set(&mut out, "u_controller", &s.tubes.u_tight_controller);
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (no, l) in self.inner.by_ref() {
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Some((no + 1, t));
            }
        }
        None
    }

    fn expect(&mut self, tag: &str) -> anyhow::Result<(usize, Vec<&'a str>)> {
        let Some((no, l)) = self.next_content() else { bail!("unexpected end of file, wanted `{tag}`") };
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.first() != Some(&tag) {
            bail!("line {no}: expected `{tag}`, found `{l}`");
        }
        Ok((no, parts[1..].to_vec()))
    }

    fn floats(&mut self, count: usize) -> anyhow::Result<Vec<f64>> {
        let Some((no, l)) = self.next_content() else { bail!("unexpected end of file") };
        let v: Result<Vec<f64>, _> = l.split_whitespace().map(str::parse).collect();
        let v = v.with_context(|| format!("line {no}"))?;
        if v.len() != count {
            bail!("line {no}: expected {count} numbers, got {}", v.len());
        }
        Ok(v)
    }

    fn mat(&mut self, name: &str) -> anyhow::Result<Mat<f64>> {
        let (no, p) = self.expect("mat")?;
        if p.len() != 3 || p[0] != name {
            bail!("line {no}: expected `mat {name} <rows> <cols>`");
        }
        let (r, c): (usize, usize) = (p[1].parse()?, p[2].parse()?);
        let mut data = Vec::with_capacity(r * c);
        for _ in 0..r {
            data.extend(self.floats(c)?);
        }
        Ok(Mat::from_vec(r, c, data))
    }

    fn vec(&mut self, name: &str) -> anyhow::Result<Vec<f64>> {
        let (no, p) = self.expect("vec")?;
        if p.len() != 2 || p[0] != name {
            bail!("line {no}: expected `vec {name} <len>`");
        }
        self.floats(p[1].parse()?)
    }

    fn set(&mut self, name: &str) -> anyhow::Result<Polytope<f64>> {
        let (no, p) = self.expect("set")?;
        if p.len() != 1 || p[0] != name {
            bail!("line {no}: expected `set {name}`");
        }
        Ok(Polytope::read_from(&mut self.inner)?)
    }
}

pub fn from_text(text: &str) -> anyhow::Result<Synthesis<f64>> {
    let mut lines = Lines { inner: text.lines().enumerate() };
    match lines.next_content() {
        Some((_, l)) if l == MAGIC => {}
        _ => bail!("not a synthesis file (missing `{MAGIC}` header)"),
    }
    let (_, key) = lines.expect("key")?;
    let (no, c) = lines.expect("config")?;
    let c: Result<Vec<f64>, _> = c.iter().map(|s| s.parse::<f64>()).collect();
    let c = c.with_context(|| format!("line {no}"))?;
    if c.len() != 9 {
        bail!("line {no}: config needs 9 values");
    }
    let config = SynthesisConfig {
        v_x: c[0],
        ts: c[1],
        disturbance_bound: c[2],
        epsilon: c[3],
        psi_bound: c[4],
        road_half_width: c[5],
        car_width: c[6],
        q_weight: c[7],
        r_weight: c[8],
    };
    if key.first().copied() != Some(cache_key(&config).as_str()) {
        bail!("stored key does not match the stored configuration");
    }
    let (no, m) = lines.expect("mrpi")?;
    if m.len() != 3 {
        bail!("line {no}: mrpi needs 3 values");
    }
    let mrpi_s: usize = m[0].parse()?;
    let mrpi_alpha: f64 = m[1].parse()?;
    let z_slack: f64 = m[2].parse()?;
    let a = lines.mat("a")?;
    let b = lines.vec("b")?;
    let e = lines.vec("e")?;
    let k_gain = lines.vec("k")?;
    let p_weight = lines.mat("p")?;
    let a_k = lines.mat("a_k")?;
    let d_set = lines.set("d")?;
    let w = lines.set("w")?;
    let z = lines.set("z")?;
    let top = lines.set("terminal_top")?;
    let bottom = lines.set("terminal_bottom")?;
    let u_sup = lines.set("u_supervisor")?;
    let u_ctrl = lines.set("u_controller")?;
    Ok(Synthesis {
        config,
        model: DiscreteModel { a, b, e, ts: config.ts },
        gain: GainSynthesis { k_gain, p_weight, a_k, iterations: 0 },
        d_set,
        w,
        tubes: TubeSets { z, x_terminal_top: top, x_terminal_bottom: bottom, u_tight_supervisor: u_sup, u_tight_controller: u_ctrl },
        mrpi_s,
        mrpi_alpha,
        z_slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let cfg = SynthesisConfig::new(9.0, 1e-3);
        let syn = synthesize(&cfg).unwrap();
        let back = from_text(&to_text(&syn)).unwrap();
        assert_eq!(back.model, syn.model);
        assert_eq!(back.gain.k_gain, syn.gain.k_gain);
        assert_eq!(back.tubes, syn.tubes);
        assert_eq!(back.d_set, syn.d_set);
        assert_eq!(cache_key(&back.config), cache_key(&syn.config));
    }

    #[test]
    fn key_changes_with_inputs_and_cache_hits() {
        let a = SynthesisConfig::new(9.0, 1e-3);
        let mut b = a;
        b.epsilon = 0.4;
        assert_ne!(cache_key(&a), cache_key(&b));
        let cache = SynthesisCache::new();
        let first = cache.get_or_synthesize(&a).unwrap();
        let second = cache.get_or_synthesize(&a).unwrap();
        assert!(Arc::ptr_eq(&first, &second));
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn rejects_tampered_files() {
        let syn = synthesize(&SynthesisConfig::new(9.0, 1e-3)).unwrap();
        let text = to_text(&syn).replacen("config 9.0", "config 9.5", 1);
        assert!(from_text(&text).is_err());
        assert!(from_text("hello").is_err());
    }
}
