//! Independent numerical references and fixtures shared by the integration
//! tests. Nothing here calls into the library's closed forms.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

/// Adaptive Simpson quadrature with Richardson correction.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // Tolerances below rounding noise would never be met.
    let floor = 1e-15 * (left.abs() + right.abs());
    if depth == 0 || delta.abs() <= 15.0 * tol.max(floor) {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Simpson over `[a, b]` split into `pieces` panels, for oscillatory
/// integrands where a single coarse first estimate can be misleading.
pub fn simpson_panels<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, pieces: usize, tol: f64) -> f64 {
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| simpson(f, a + k as f64 * h, a + (k + 1) as f64 * h, tol / pieces as f64))
        .sum()
}

/// Survival `exp(−∫₀^τ Γ sin²(Ωs/2) ds)` with the integral done numerically.
pub fn survival_by_quadrature(tau: f64, omega: f64, gamma: f64) -> f64 {
    if tau == 0.0 {
        return 1.0;
    }
    let hazard = |s: f64| gamma * (0.5 * omega * s).sin().powi(2);
    let periods = (omega * tau / std::f64::consts::TAU).ceil().max(1.0) as usize;
    (-simpson_panels(&hazard, 0.0, tau, periods.min(4096), 1e-14)).exp()
}

/// Hazard-renewal waiting density, written out directly.
pub fn hazard_density(tau: f64, omega: f64, gamma: f64) -> f64 {
    let pe = (0.5 * omega * tau).sin().powi(2);
    gamma * pe * (-gamma * (0.5 * tau - (omega * tau).sin() / (2.0 * omega))).exp()
}

pub fn hazard_cdf(tau: f64, omega: f64, gamma: f64) -> f64 {
    1.0 - (-gamma * (0.5 * tau - (omega * tau).sin() / (2.0 * omega))).exp()
}

/// Quantum-jump waiting density in the underdamped regime.
pub fn jump_density(tau: f64, omega: f64, gamma: f64) -> f64 {
    let mu2 = omega * omega / 4.0 - gamma * gamma / 16.0;
    let mu = mu2.sqrt();
    gamma * (omega * omega / (4.0 * mu2)) * (-gamma * tau / 2.0).exp() * (mu * tau).sin().powi(2)
}

/// Complex number as `(re, im)`; kept local so the ODE reference shares no
/// arithmetic with the library.
type C = (f64, f64);

fn cadd(a: C, b: C) -> C {
    (a.0 + b.0, a.1 + b.1)
}

fn cscale(a: C, s: f64) -> C {
    (a.0 * s, a.1 * s)
}

fn times_i(a: C) -> C {
    (-a.1, a.0)
}

/// Right-hand side of the no-jump amplitude equations:
/// `ċ_g = i(Ω/2)c_e`, `ċ_e = i(Ω/2)c_g − (Γ/2)c_e`.
fn rhs(cg: C, ce: C, omega: f64, gamma: f64) -> (C, C) {
    let dg = times_i(cscale(ce, 0.5 * omega));
    let de = cadd(times_i(cscale(cg, 0.5 * omega)), cscale(ce, -0.5 * gamma));
    (dg, de)
}

/// Classical RK4 on the unnormalized amplitudes from the ground state.
/// Returns `(t, |c_g|², |c_e|²)` at every multiple of `sample_every` steps.
pub fn integrate_no_jump(
    omega: f64,
    gamma: f64,
    t_end: f64,
    h: f64,
    sample_every: usize,
) -> Vec<(f64, f64, f64)> {
    let steps = (t_end / h).round() as usize;
    let mut cg: C = (1.0, 0.0);
    let mut ce: C = (0.0, 0.0);
    let mut out = vec![(0.0, 1.0, 0.0)];
    for k in 1..=steps {
        let (k1g, k1e) = rhs(cg, ce, omega, gamma);
        let (k2g, k2e) = rhs(cadd(cg, cscale(k1g, h / 2.0)), cadd(ce, cscale(k1e, h / 2.0)), omega, gamma);
        let (k3g, k3e) = rhs(cadd(cg, cscale(k2g, h / 2.0)), cadd(ce, cscale(k2e, h / 2.0)), omega, gamma);
        let (k4g, k4e) = rhs(cadd(cg, cscale(k3g, h)), cadd(ce, cscale(k3e, h)), omega, gamma);
        let sum_g = cadd(cadd(k1g, cscale(k2g, 2.0)), cadd(cscale(k3g, 2.0), k4g));
        let sum_e = cadd(cadd(k1e, cscale(k2e, 2.0)), cadd(cscale(k3e, 2.0), k4e));
        cg = cadd(cg, cscale(sum_g, h / 6.0));
        ce = cadd(ce, cscale(sum_e, h / 6.0));
        if k % sample_every == 0 {
            out.push((
                k as f64 * h,
                cg.0 * cg.0 + cg.1 * cg.1,
                ce.0 * ce.0 + ce.1 * ce.1,
            ));
        }
    }
    out
}

/// Median of a slice (sorted copy).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Minimal HTTP/1.1 server answering each connection with the next canned
/// `(status, body)`; the last response repeats once the list runs out.
pub struct MockServer {
    pub url: String,
    pub connections: Arc<AtomicUsize>,
    pub request_lines: Arc<Mutex<Vec<String>>>,
}

impl MockServer {
    pub fn start(responses: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let addr = listener.local_addr().unwrap();
        let connections = Arc::new(AtomicUsize::new(0));
        let request_lines = Arc::new(Mutex::new(Vec::new()));
        let (conn, lines) = (connections.clone(), request_lines.clone());
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let k = conn.fetch_add(1, Ordering::SeqCst);
                let (status, body) = responses
                    .get(k)
                    .or(responses.last())
                    .cloned()
                    .unwrap_or((500, String::new()));
                if let Some(line) = serve(stream, status, &body) {
                    lines.lock().unwrap().push(line);
                }
            }
        });
        Self {
            url: format!("http://{addr}/API/jsonI.php"),
            connections,
            request_lines,
        }
    }

    pub fn connection_count(&self) -> usize {
        self.connections.load(Ordering::SeqCst)
    }
}

fn serve(stream: TcpStream, status: u16, body: &str) -> Option<String> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut first = String::new();
    reader.read_line(&mut first).ok()?;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 || line == "\r\n" {
            break;
        }
    }
    let reason = if status == 200 { "OK" } else { "Error" };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let mut stream = stream;
    stream.write_all(response.as_bytes()).ok()?;
    stream.flush().ok()?;
    Some(first.trim_end().to_string())
}

/// A payload in the service's JSON shape.
pub fn qrng_payload(data: &[u8]) -> String {
    let values: Vec<String> = data.iter().map(u8::to_string).collect();
    format!(
        "{{\"type\":\"uint8\",\"length\":{},\"data\":[{}],\"success\":true}}",
        data.len(),
        values.join(",")
    )
}
