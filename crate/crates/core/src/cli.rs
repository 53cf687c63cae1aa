//! Command-line front end.

use std::collections::HashSet;
use std::fs;
use std::io::Write as _;
use std::net::{SocketAddr, TcpListener, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::analysis::{
    self, comparison_csv, comparison_table, curve_csv, optimal_threshold, optimal_threshold_sweep,
    simulate_attack_with_workers, sweep_csv, AdversaryModel, AnalysisParams,
};
use crate::bundle::{
    armor, dearmor, decode_bundle, encode_bundle, BackupBundle, BackupMode, RecoveryInstruction,
    VerificationPolicy, ARMOR_HEADER,
};
use crate::crypto::{generate_identity_keypair, KeyPair, PublicKey};
use crate::protocol::{
    create_backup, renewal_check, trustee_open_request, IdentityDirectory, MemoryDirectory,
    RecoverySession, SocialAuthVerdict, TrusteeDescriptor, TrusteeReply,
};
use crate::transport::{decode_frame, encode_frame, serve_directory, Message, RemoteDirectory};

#[derive(Debug, Parser)]
#[command(
    name = "socialkey",
    version,
    about = "Social key backup and recovery toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an identity keypair (<out>.pub and <out>.key)
    Keygen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Manage or serve a public key directory
    Directory {
        #[command(subcommand)]
        action: DirectoryCommand,
    },
    /// Create a backup bundle
    Backup(BackupArgs),
    /// Print bundle parameters (never trustee identities)
    Inspect { bundle: PathBuf },
    /// Owner side of recovery
    Recover {
        #[command(subcommand)]
        action: RecoverCommand,
    },
    /// Trustee side of recovery
    Trustee {
        #[command(subcommand)]
        action: TrusteeCommand,
    },
    /// Report trustees whose published key changed since the backup
    RenewCheck {
        /// LOCATOR=PUBLIC_KEY_FILE, repeated
        #[arg(long = "trustee", required = true)]
        trustees: Vec<String>,
        #[command(flatten)]
        directory: DirectorySource,
    },
    /// Failure curve over k for one n
    Analyze {
        #[arg(short = 'n', long = "trustees")]
        n: u32,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        csv: bool,
    },
    /// Optimal k and minimal failure rate for n = 1..=max-n
    Optimize {
        #[arg(long, default_value_t = 10)]
        max_n: u32,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        csv: bool,
    },
    /// Failure-rate comparison of backup approaches at (3, 5)
    Compare {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        csv: bool,
    },
    /// Monte Carlo estimate of the attack success rate
    Simulate {
        #[arg(short = 'n', long = "trustees")]
        n: u32,
        #[arg(short = 'k', long = "threshold")]
        k: u32,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = analysis::DEFAULT_WORKERS)]
        workers: usize,
        #[command(flatten)]
        model: ModelArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum DirectoryCommand {
    /// Publish a public key under a locator in a store file
    Add {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        locator: String,
        #[arg(long)]
        key: PathBuf,
    },
    /// Fetch a public key by locator
    Get {
        #[command(flatten)]
        source: DirectorySource,
        #[arg(long)]
        locator: String,
        /// Write the armored key here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve lookups from a store file over TCP
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long)]
        port: u16,
        #[arg(long)]
        max_connections: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RecoverCommand {
    /// Start a recovery session from a bundle
    Open {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        session: PathBuf,
    },
    /// Write the recovery request frame sent to every trustee
    Request {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add a trustee response to the session
    Absorb {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        response: PathBuf,
    },
    /// Reconstruct the secret once k shares are in
    Finish {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum TrusteeCommand {
    /// Open a recovery request and answer it
    Respond {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        request: PathBuf,
        #[command(flatten)]
        directory: DirectorySource,
        /// Outcome of confirming the requester in person
        #[arg(long, value_enum)]
        verdict: VerdictArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VerdictArg {
    Confirmed,
    Rejected,
    Ignored,
}

impl From<VerdictArg> for SocialAuthVerdict {
    fn from(v: VerdictArg) -> Self {
        match v {
            VerdictArg::Confirmed => SocialAuthVerdict::ConfirmedOwner,
            VerdictArg::Rejected => SocialAuthVerdict::Rejected,
            VerdictArg::Ignored => SocialAuthVerdict::Ignored,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    IndirectPermission,
    IndirectEscrow,
}

#[derive(Debug, Args)]
pub struct BackupArgs {
    /// Owner private key file
    #[arg(long)]
    owner: PathBuf,
    /// File holding the secret to protect
    #[arg(long)]
    secret: PathBuf,
    /// Trustee public key file, repeated once per trustee
    #[arg(long = "trustee", required = true)]
    trustees: Vec<PathBuf>,
    #[arg(short = 'k', long = "threshold")]
    k: usize,
    /// key=value recovery instruction file
    #[arg(long)]
    instruction: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "indirect-permission")]
    mode: ModeArg,
    /// Write the armored text form
    #[arg(long)]
    armor: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct DirectorySource {
    /// Directory store file
    #[arg(long)]
    store: Option<PathBuf>,
    /// host:port of a running `directory serve`
    #[arg(long)]
    endpoint: Option<String>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Use the real-world defaults (the default; accepted for clarity)
    #[arg(long)]
    defaults: bool,
    #[arg(long)]
    contacts: Option<u32>,
    #[arg(long)]
    p_steal: Option<f64>,
    /// Defaults to q3
    #[arg(long)]
    p1: Option<f64>,
    /// Defaults to (1 - q3) / 2
    #[arg(long)]
    q1: Option<f64>,
    #[arg(long)]
    q3: Option<f64>,
    #[arg(long)]
    unavailability: Option<f64>,
}

impl ModelArgs {
    fn params(&self) -> Result<AnalysisParams> {
        let d = analysis::default_params();
        let q3 = self.q3.unwrap_or(d.model.q3);
        let q1 = self.q1.unwrap_or((1.0 - q3) / 2.0);
        let p1 = self.p1.unwrap_or(q3);
        let params = AnalysisParams {
            model: AdversaryModel {
                contacts: self.contacts.unwrap_or(d.model.contacts),
                p_steal: self.p_steal.unwrap_or(d.model.p_steal),
                p1,
                p2: 1.0 - p1,
                q1,
                q2: 1.0 - q1 - q3,
                q3,
            },
            unavailability: self.unavailability.unwrap_or(d.unavailability),
        };
        params.validate()?;
        Ok(params)
    }
}

fn rng_from(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_public_key(path: &Path) -> Result<PublicKey> {
    PublicKey::from_armor(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn read_keypair(path: &Path) -> Result<KeyPair> {
    KeyPair::from_armor(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Reads `.qrb` binary or armored text, detected by content.
pub fn read_bundle(path: &Path) -> Result<BackupBundle> {
    let raw = read(path)?;
    let bytes = match std::str::from_utf8(&raw) {
        Ok(text) if text.trim_start().starts_with(ARMOR_HEADER) => dearmor(text)?,
        _ => raw,
    };
    decode_bundle(&bytes).with_context(|| format!("decoding {}", path.display()))
}

/// Parse a `key=value` instruction file. Blank lines and `#` comments are
/// skipped; values may be wrapped in double quotes. Unknown keys are errors.
pub fn parse_instruction(text: &str, owner: &PublicKey) -> Result<RecoveryInstruction> {
    let mut name = None;
    let mut fingerprint = None;
    let mut locator = None;
    let mut policy = None;
    let mut legal_agent = None;
    let mut note = None;
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key=value", lineno + 1))?;
        let key = key.trim();
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value)
            .to_string();
        if !seen.insert(key.to_string()) {
            bail!("line {}: duplicate key {key:?}", lineno + 1);
        }
        match key {
            "owner_display_name" => name = Some(value),
            "owner_key_fingerprint" => fingerprint = Some(value),
            "directory_locator" => locator = Some(value),
            "verification_policy" => policy = Some(value.parse::<VerificationPolicy>()?),
            "legal_agent" => legal_agent = Some(value).filter(|v| !v.is_empty()),
            "freeform_note" => note = Some(value),
            other => bail!("line {}: unknown key {other:?}", lineno + 1),
        }
    }
    Ok(RecoveryInstruction {
        owner_display_name: name.ok_or_else(|| anyhow!("owner_display_name is required"))?,
        owner_key_fingerprint: fingerprint.unwrap_or_else(|| owner.fingerprint()),
        directory_locator: locator.ok_or_else(|| anyhow!("directory_locator is required"))?,
        verification_policy: policy.unwrap_or(VerificationPolicy::InPerson),
        legal_agent,
        freeform_note: note.unwrap_or_default(),
    })
}

/// Directory store file: one `locator base64(public key)` pair per line.
pub fn load_store(path: &Path) -> Result<MemoryDirectory> {
    let dir = MemoryDirectory::new();
    if !path.exists() {
        return Ok(dir);
    }
    for (lineno, line) in read_text(path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (locator, key) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| anyhow!("{}:{}: expected `locator key`", path.display(), lineno + 1))?;
        let key = PublicKey::from_bytes(&STANDARD.decode(key.trim())?)?;
        dir.publish(locator, key);
    }
    Ok(dir)
}

fn save_store(path: &Path, dir: &MemoryDirectory) -> Result<()> {
    let mut out = String::new();
    for (locator, key) in dir.entries() {
        out.push_str(&format!("{locator} {}\n", STANDARD.encode(key.to_bytes())));
    }
    write(path, out.as_bytes())
}

fn open_directory(source: &DirectorySource) -> Result<Box<dyn IdentityDirectory>> {
    match (&source.store, &source.endpoint) {
        (Some(store), None) => Ok(Box::new(load_store(store)?)),
        (None, Some(endpoint)) => {
            let addr: SocketAddr = endpoint
                .to_socket_addrs()
                .with_context(|| format!("resolving {endpoint}"))?
                .next()
                .ok_or_else(|| anyhow!("{endpoint} did not resolve"))?;
            Ok(Box::new(RemoteDirectory { addr }))
        }
        _ => bail!("exactly one of --store or --endpoint is required"),
    }
}

fn print_table(header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    println!("{}", line(header.to_vec()));
    for row in rows {
        println!("{}", line(row.iter().map(String::as_str).collect()));
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Keygen { out, seed } => {
            let kp = generate_identity_keypair(&mut rng_from(seed))?;
            let pub_path = out.with_extension("pub");
            let key_path = out.with_extension("key");
            write(&pub_path, kp.public_key().to_armor().as_bytes())?;
            write(&key_path, kp.to_armor().as_bytes())?;
            println!("fingerprint: {}", kp.public_key().fingerprint());
            println!("public key:  {}", pub_path.display());
            println!("private key: {}", key_path.display());
        }
        Command::Directory { action } => run_directory(action)?,
        Command::Backup(args) => run_backup(args)?,
        Command::Inspect { bundle } => {
            let b = read_bundle(&bundle)?;
            println!("format: QRB1");
            println!("version: {}", b.version);
            println!("mode: {}", b.mode.as_str());
            println!("threshold k: {}", b.threshold);
            println!("trustees n: {}", b.trustee_count);
            println!("packets: {}", b.sealed_packets.len());
            match &b.encrypted_secret {
                Some(ct) => println!("encrypted secret: {} bytes", ct.to_bytes().len()),
                None => println!("encrypted secret: none"),
            }
        }
        Command::Recover { action } => run_recover(action)?,
        Command::Trustee {
            action:
                TrusteeCommand::Respond {
                    key,
                    request,
                    directory,
                    verdict,
                    out,
                },
        } => {
            let trustee = read_keypair(&key)?;
            let packets = match decode_frame(&read(&request)?)? {
                Message::RecoveryRequest { packets } => packets,
                other => bail!("expected a recovery_request, found {}", other.kind_name()),
            };
            let dir = open_directory(&directory)?;
            let reply = match trustee_open_request(&trustee, &packets, dir.as_ref()) {
                Ok(packet) => {
                    let i = packet.instruction();
                    eprintln!("request from: {}", i.owner_display_name);
                    eprintln!("owner key:    {}", i.owner_key_fingerprint);
                    eprintln!("verify by:    {}", i.verification_policy);
                    if let Some(agent) = &i.legal_agent {
                        eprintln!("legal agent:  {agent}");
                    }
                    if !i.freeform_note.is_empty() {
                        eprintln!("note:         {}", i.freeform_note);
                    }
                    packet.release(verdict.into())
                }
                Err(reason) => TrusteeReply::Refusal(reason),
            };
            let message = match reply {
                TrusteeReply::Share(r) => {
                    println!("released share {}", r.share.index);
                    Message::ShareResponse(r)
                }
                TrusteeReply::Refusal(reason) => {
                    println!("refused: {reason}");
                    Message::Refusal(reason)
                }
            };
            write(&out, &encode_frame(&message))?;
        }
        Command::RenewCheck {
            trustees,
            directory,
        } => {
            let descriptors = trustees
                .iter()
                .map(|spec| {
                    let (locator, path) = spec.split_once('=').ok_or_else(|| {
                        anyhow!("--trustee expects LOCATOR=KEYFILE, got {spec:?}")
                    })?;
                    Ok(TrusteeDescriptor::new(
                        locator,
                        locator,
                        read_public_key(Path::new(path))?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let dir = open_directory(&directory)?;
            let report = renewal_check(dir.as_ref(), &descriptors);
            for t in &report.changed {
                println!("changed: {}", t.locator);
            }
            for (t, e) in &report.unavailable {
                println!("unavailable: {} ({e})", t.locator);
            }
            if report.needs_renewal() {
                println!("renewal recommended");
            } else if report.unavailable.is_empty() {
                println!("all {} trustee keys unchanged", descriptors.len());
            }
        }
        Command::Analyze { n, model, csv } => {
            let opt = optimal_threshold(&model.params()?, n)?;
            if csv {
                print!("{}", curve_csv(&opt));
            } else {
                let rows: Vec<Vec<String>> = opt
                    .curve
                    .iter()
                    .map(|r| {
                        vec![
                            r.k.to_string(),
                            format!("{:.4e}", r.p),
                            format!("{:.4e}", r.q),
                            format!("{:.4e}", r.f),
                        ]
                    })
                    .collect();
                print_table(&["k", "P", "Q", "F"], &rows);
                println!("minimum F = {:.4e} at k = {}", opt.f_min, opt.k_star);
            }
        }
        Command::Optimize { max_n, model, csv } => {
            let sweep = optimal_threshold_sweep(&model.params()?, max_n)?;
            if csv {
                print!("{}", sweep_csv(&sweep));
            } else {
                let rows: Vec<Vec<String>> = sweep
                    .iter()
                    .map(|o| {
                        vec![
                            o.n.to_string(),
                            o.k_star.to_string(),
                            format!("{:.4e}", o.f_min),
                        ]
                    })
                    .collect();
                print_table(&["n", "k*", "F_min"], &rows);
            }
        }
        Command::Compare { model, csv } => {
            let rows = comparison_table(&model.params()?)?;
            if csv {
                print!("{}", comparison_csv(&rows));
            } else {
                let rows: Vec<Vec<String>> = rows
                    .iter()
                    .map(|r| {
                        vec![
                            r.approach.as_str().to_string(),
                            format!("{:.4e}", r.p),
                            format!("{:.4e}", r.q),
                            format!("{:.7}%", r.f * 100.0),
                        ]
                    })
                    .collect();
                print_table(&["approach", "P", "Q", "F"], &rows);
            }
        }
        Command::Simulate {
            n,
            k,
            trials,
            seed,
            workers,
            model,
        } => {
            let params = model.params()?;
            let est = simulate_attack_with_workers(&params, k, n, trials, seed, workers)?;
            let exact = analysis::attack_success_exact(&params, k, n)?;
            println!("trials:    {}", est.trials);
            println!("successes: {}", est.successes);
            println!("estimate:  {:.6e} ± {:.2e}", est.estimate, est.std_error);
            println!("exact:     {exact:.6e}");
            if est.std_error > 0.0 {
                println!("z-score:   {:.3}", (est.estimate - exact) / est.std_error);
            }
        }
    }
    Ok(())
}

fn run_directory(action: DirectoryCommand) -> Result<()> {
    match action {
        DirectoryCommand::Add {
            store,
            locator,
            key,
        } => {
            let dir = load_store(&store)?;
            let key = read_public_key(&key)?;
            dir.publish(locator.clone(), key);
            save_store(&store, &dir)?;
            println!("published {locator} ({})", key.fingerprint());
        }
        DirectoryCommand::Get {
            source,
            locator,
            out,
        } => {
            let key = open_directory(&source)?.lookup(&locator)?;
            match out {
                Some(path) => write(&path, key.to_armor().as_bytes())?,
                None => print!("{}", key.to_armor()),
            }
        }
        DirectoryCommand::Serve {
            store,
            bind,
            port,
            max_connections,
        } => {
            let dir = Arc::new(load_store(&store)?);
            let listener = TcpListener::bind((bind.as_str(), port))
                .with_context(|| format!("binding {bind}:{port}"))?;
            println!("serving directory on {}", listener.local_addr()?);
            std::io::stdout().flush()?;
            serve_directory(listener, dir, max_connections)?;
        }
    }
    Ok(())
}

fn run_backup(args: BackupArgs) -> Result<()> {
    let owner = read_keypair(&args.owner)?;
    let secret = zeroize::Zeroizing::new(read(&args.secret)?);
    let trustees = args
        .trustees
        .iter()
        .map(|path| {
            let locator = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(TrusteeDescriptor::new(
                path.display().to_string(),
                locator,
                read_public_key(path)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let instruction = parse_instruction(&read_text(&args.instruction)?, owner.public_key())?;
    let mode = match args.mode {
        ModeArg::IndirectPermission => BackupMode::IndirectPermission,
        ModeArg::IndirectEscrow => BackupMode::IndirectEscrow,
    };
    let bundle = create_backup(
        &owner,
        &secret,
        &trustees,
        args.k,
        &instruction,
        mode,
        &mut rng_from(args.seed),
    )?;
    let bytes = encode_bundle(&bundle);
    let armored = args.armor || args.out.to_string_lossy().ends_with(".txt");
    if armored {
        write(&args.out, armor(&bytes).as_bytes())?;
    } else {
        write(&args.out, &bytes)?;
    }
    println!(
        "wrote ({}, {}) {} backup to {}",
        bundle.threshold,
        bundle.trustee_count,
        bundle.mode.as_str(),
        args.out.display()
    );
    Ok(())
}

fn load_session(path: &Path) -> Result<RecoverySession> {
    RecoverySession::from_bytes(&read(path)?)
        .with_context(|| format!("loading session {}", path.display()))
}

fn run_recover(action: RecoverCommand) -> Result<()> {
    match action {
        RecoverCommand::Open { bundle, session } => {
            let s = RecoverySession::open(read_bundle(&bundle)?)?;
            write(&session, &s.to_bytes())?;
            println!(
                "session open: need {} of {} shares",
                s.threshold(),
                s.bundle().trustee_count
            );
        }
        RecoverCommand::Request { bundle, out } => {
            let b = read_bundle(&bundle)?;
            let frame = encode_frame(&Message::RecoveryRequest {
                packets: b.sealed_packets,
            });
            write(&out, &frame)?;
            println!("wrote recovery request to {}", out.display());
        }
        RecoverCommand::Absorb { session, response } => {
            let mut s = load_session(&session)?;
            match decode_frame(&read(&response)?)? {
                Message::ShareResponse(r) => s.absorb(r)?,
                Message::Refusal(reason) => bail!("trustee refused: {reason}"),
                other => bail!("expected a share_response, found {}", other.kind_name()),
            }
            write(&session, &s.to_bytes())?;
            println!(
                "{} of {} shares collected ({})",
                s.collected_count(),
                s.threshold(),
                s.state().as_str()
            );
        }
        RecoverCommand::Finish { session, out } => {
            let mut s = load_session(&session)?;
            let secret = s.finish()?;
            write(&out, &secret)?;
            write(&session, &s.to_bytes())?;
            println!("recovered {} bytes to {}", secret.len(), out.display());
        }
    }
    Ok(())
}
