use std::ffi::{CStr, CString};
use std::ptr;

use socialkey_ffi::*;

fn last_error() -> String {
    let p = sk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn keypair(seed: u8) -> *mut SkKeyPair {
    let mut kp = ptr::null_mut();
    assert_eq!(
        sk_keypair_from_seed([seed; 32].as_ptr(), &mut kp),
        SkStatus::Ok
    );
    kp
}

unsafe fn public_key(kp: *const SkKeyPair) -> [u8; 64] {
    let mut pk = [0u8; 64];
    assert_eq!(sk_keypair_public_key(kp, pk.as_mut_ptr()), SkStatus::Ok);
    pk
}

unsafe fn buffer_bytes(buf: &SkBuffer) -> Vec<u8> {
    std::slice::from_raw_parts(buf.data, buf.len).to_vec()
}

struct Strings {
    name: CString,
    locator: CString,
    policy: CString,
}

impl Strings {
    fn new() -> Self {
        Strings {
            name: CString::new("Alice").unwrap(),
            locator: CString::new("alice").unwrap(),
            policy: CString::new("in_person").unwrap(),
        }
    }

    fn instruction(&self) -> SkInstruction {
        SkInstruction {
            owner_display_name: self.name.as_ptr(),
            directory_locator: self.locator.as_ptr(),
            verification_policy: self.policy.as_ptr(),
            legal_agent: ptr::null(),
            freeform_note: ptr::null(),
        }
    }
}

#[test]
fn ceremony_through_the_abi() {
    unsafe {
        let owner = keypair(0);
        let trustees: Vec<_> = (1..=5).map(|s| keypair(s)).collect();
        let mut keys = Vec::new();
        for &t in &trustees {
            keys.extend_from_slice(&public_key(t));
        }
        let dir = sk_directory_new();
        let locator = CString::new("alice").unwrap();
        assert_eq!(
            sk_directory_publish(dir, locator.as_ptr(), public_key(owner).as_ptr()),
            SkStatus::Ok
        );

        let strings = Strings::new();
        let instr = strings.instruction();
        let secret = b"thirty-two bytes of wallet seed!";
        let seed = 42u64;
        let mut bundle = ptr::null_mut();
        assert_eq!(
            sk_backup_create(
                owner,
                secret.as_ptr(),
                secret.len(),
                keys.as_ptr(),
                5,
                3,
                &instr,
                SkMode::IndirectPermission,
                &seed,
                &mut bundle,
            ),
            SkStatus::Ok
        );

        // through the armored form and back
        let mut text = SkBuffer {
            data: ptr::null_mut(),
            len: 0,
        };
        assert_eq!(sk_bundle_encode(bundle, true, &mut text), SkStatus::Ok);
        assert!(buffer_bytes(&text).starts_with(b"-----BEGIN QR BACKUP-----"));
        let mut reloaded = ptr::null_mut();
        assert_eq!(
            sk_bundle_decode(text.data, text.len, &mut reloaded),
            SkStatus::Ok
        );
        sk_buffer_free(text);
        let (mut k, mut n) = (0u16, 0u16);
        assert_eq!(sk_bundle_params(reloaded, &mut k, &mut n), SkStatus::Ok);
        assert_eq!((k, n), (3, 5));

        let mut session = ptr::null_mut();
        assert_eq!(sk_session_open(reloaded, &mut session), SkStatus::Ok);

        let mut out = SkBuffer {
            data: ptr::null_mut(),
            len: 0,
        };
        assert_eq!(sk_session_finish(session, &mut out), SkStatus::NotReady);
        assert!(out.data.is_null());

        for (i, &t) in trustees.iter().enumerate() {
            let verdict = if i == 0 {
                SkVerdict::Rejected
            } else {
                SkVerdict::Confirmed
            };
            let mut frame = SkBuffer {
                data: ptr::null_mut(),
                len: 0,
            };
            let mut code = 0xff;
            let status = sk_trustee_respond(t, reloaded, dir, verdict, &mut frame, &mut code);
            if i == 0 {
                assert_eq!(status, SkStatus::Refused);
                assert_eq!(code, 4);
                assert_eq!(
                    sk_session_absorb(session, frame.data, frame.len),
                    SkStatus::Refused
                );
                assert!(last_error().contains("ownership_rejected"));
            } else {
                assert_eq!(status, SkStatus::Ok);
                assert_eq!(code, 0);
                assert_eq!(
                    sk_session_absorb(session, frame.data, frame.len),
                    SkStatus::Ok
                );
            }
            sk_buffer_free(frame);
        }

        let mut state = SkSessionState::Aborted;
        let mut collected = 0;
        assert_eq!(
            sk_session_status(session, &mut state, &mut collected),
            SkStatus::Ok
        );
        assert_eq!((state, collected), (SkSessionState::Ready, 4));

        assert_eq!(sk_session_finish(session, &mut out), SkStatus::Ok);
        assert_eq!(buffer_bytes(&out), secret);
        sk_buffer_free(out);
        let mut spent = SkBuffer {
            data: ptr::null_mut(),
            len: 0,
        };
        assert_eq!(sk_session_finish(session, &mut spent), SkStatus::Protocol);

        sk_session_free(session);
        sk_bundle_free(reloaded);
        sk_bundle_free(bundle);
        sk_directory_free(dir);
        for t in trustees {
            sk_keypair_free(t);
        }
        sk_keypair_free(owner);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut kp = ptr::null_mut();
        assert_eq!(
            sk_keypair_from_seed(ptr::null(), &mut kp),
            SkStatus::NullPointer
        );
        assert!(last_error().contains("seed"));

        let junk = CString::new("not a key").unwrap();
        assert_eq!(
            sk_keypair_from_armor(junk.as_ptr(), &mut kp),
            SkStatus::Malformed
        );

        let mut bundle = ptr::null_mut();
        assert_eq!(
            sk_bundle_decode(b"QRB1".as_ptr(), 4, &mut bundle),
            SkStatus::Malformed
        );
        assert!(bundle.is_null());

        // k > n
        let owner = keypair(0);
        let trustee = keypair(1);
        let pk = public_key(trustee);
        let strings = Strings::new();
        let instr = strings.instruction();
        let status = sk_backup_create(
            owner,
            b"s".as_ptr(),
            1,
            pk.as_ptr(),
            1,
            2,
            &instr,
            SkMode::IndirectPermission,
            ptr::null(),
            &mut bundle,
        );
        assert_eq!(status, SkStatus::Protocol);
        assert!(last_error().contains("k=2 n=1"));

        let bad_policy = CString::new("carrier_pigeon").unwrap();
        let instr = SkInstruction {
            verification_policy: bad_policy.as_ptr(),
            ..strings.instruction()
        };
        let status = sk_backup_create(
            owner,
            b"s".as_ptr(),
            1,
            pk.as_ptr(),
            1,
            1,
            &instr,
            SkMode::IndirectEscrow,
            ptr::null(),
            &mut bundle,
        );
        assert_eq!(status, SkStatus::InvalidArgument);

        sk_keypair_free(trustee);
        sk_keypair_free(ptr::null_mut());
        sk_buffer_free(SkBuffer {
            data: ptr::null_mut(),
            len: 0,
        });
        sk_keypair_free(owner);
    }
}

#[test]
fn keys_round_trip_through_armor() {
    unsafe {
        let mut kp = ptr::null_mut();
        assert_eq!(sk_keypair_generate(&mut kp), SkStatus::Ok);
        let mut armor = SkBuffer {
            data: ptr::null_mut(),
            len: 0,
        };
        assert_eq!(sk_keypair_private_armor(kp, &mut armor), SkStatus::Ok);
        let text = CString::new(buffer_bytes(&armor)).unwrap();
        sk_buffer_free(armor);
        let mut again = ptr::null_mut();
        assert_eq!(
            sk_keypair_from_armor(text.as_ptr(), &mut again),
            SkStatus::Ok
        );
        assert_eq!(public_key(kp), public_key(again));

        let mut fp = [0 as std::ffi::c_char; 17];
        assert_eq!(sk_keypair_fingerprint(kp, fp.as_mut_ptr()), SkStatus::Ok);
        let fp = CStr::from_ptr(fp.as_ptr()).to_str().unwrap();
        assert_eq!(fp.len(), 16);
        assert!(fp.bytes().all(|b| b.is_ascii_hexdigit()));

        sk_keypair_free(kp);
        sk_keypair_free(again);
    }
}

#[test]
fn analysis_entry_points() {
    unsafe {
        let mut model = std::mem::zeroed::<SkModel>();
        assert_eq!(sk_default_model(&mut model), SkStatus::Ok);
        assert_eq!(model.contacts, 404);

        let (mut k_star, mut f_min) = (0, 0.0);
        assert_eq!(
            sk_optimal_threshold(&model, 6, &mut k_star, &mut f_min),
            SkStatus::Ok
        );
        assert_eq!(k_star, 3);
        assert!((1e-9..=1e-7).contains(&f_min));

        let mut q = 0.0;
        assert_eq!(sk_recovery_unreliability(0.001, 3, 5, &mut q), SkStatus::Ok);
        let u: f64 = 0.001;
        let hand = 10.0 * u.powi(3) * (1.0 - u).powi(2) + 5.0 * u.powi(4) * (1.0 - u) + u.powi(5);
        assert!((q - hand).abs() <= 1e-12 * hand);

        let mut p = 0.0;
        assert_eq!(sk_attack_success(&model, 3, 5, &mut p), SkStatus::Ok);
        assert!(p > 0.0 && p < 1e-8);

        model.q3 = 2.0;
        assert_eq!(sk_attack_success(&model, 3, 5, &mut p), SkStatus::Analysis);
        assert!(last_error().contains("q3"));
    }
}
