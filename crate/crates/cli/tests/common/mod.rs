#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

pub fn ppknn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ppknn"))
}

pub fn run(args: &[&str]) -> Output {
    ppknn().args(args).output().expect("ppknn runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// A `ppknn serve` process, killed on drop.
pub struct Server {
    child: Option<Child>,
    pub addr: SocketAddr,
}

impl Server {
    /// Starts `ppknn serve ARGS` and waits for its "listening ADDR" line.
    pub fn start(args: &[&str]) -> Server {
        let mut child = ppknn()
            .arg("serve")
            .args(args)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .expect("spawn ppknn serve");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .expect("read listening line");
        let addr = match line.trim().strip_prefix("listening ") {
            Some(a) => a.parse().expect("socket address"),
            None => {
                let _ = child.kill();
                let out = child.wait_with_output().unwrap();
                panic!("server did not start: {:?} {}", line, stderr(&out));
            }
        };
        Server {
            child: Some(child),
            addr,
        }
    }

    pub fn addr(&self) -> String {
        self.addr.to_string()
    }

    /// Waits for the process to exit by itself and returns its output.
    pub fn wait(mut self) -> Output {
        self.child.take().unwrap().wait_with_output().expect("wait")
    }

    pub fn pid(&self) -> u32 {
        self.child.as_ref().unwrap().id()
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(mut c) = self.child.take() {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

/// P2 and P1 serving `db` under the key pair in `keys`.
pub fn start_pair(keys: &Path, db: &Path) -> (Server, Server) {
    let p2 = Server::start(&[
        "--role",
        "p2",
        "--listen",
        "127.0.0.1:0",
        "--secret",
        p(&keys.join("ppknn.sec")),
    ]);
    let p1 = Server::start(&[
        "--role",
        "p1",
        "--listen",
        "127.0.0.1:0",
        "--connect",
        &p2.addr(),
        "--pub",
        p(&keys.join("ppknn.pub")),
        "--db",
        p(db),
    ]);
    (p2, p1)
}

pub fn keygen(dir: &Path, seed: u64) {
    let out = run(&[
        "keygen",
        "--bits",
        "512",
        "--insecure",
        "--out",
        p(dir),
        "--seed",
        &seed.to_string(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

pub fn query(p1: &Server, keys: &Path, k: usize, mode: &str, q: &[u64]) -> Output {
    let q: Vec<String> = q.iter().map(u64::to_string).collect();
    run(&[
        "query",
        "--connect",
        &p1.addr(),
        "--pub",
        p(&keys.join("ppknn.pub")),
        "-k",
        &k.to_string(),
        "--mode",
        mode,
        "--query",
        &q.join(","),
    ])
}
