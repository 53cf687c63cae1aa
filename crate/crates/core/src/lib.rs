//! Owner-held key backups whose recovery permission is threshold-split
//! across trustees, plus the failure-rate model used to pick (k, n).

pub mod analysis;
pub mod bundle;
pub mod cli;
pub mod crypto;
pub mod protocol;
pub mod sss;
pub mod transport;
mod wire;

pub use bundle::{
    armor, dearmor, decode_bundle, encode_bundle, ArmorError, BackupBundle, BackupMode,
    BundleError, RecoveryInstruction, SharePacketPlain, VerificationPolicy,
};
pub use crypto::{CryptoError, KeyPair, PublicKey, SealedBlob};
pub use protocol::{
    create_backup, open_recovery_session, renew_backup, renewal_check, trustee_handle_request,
    IdentityDirectory, MemoryDirectory, ProtocolError, RecoverySession, RefusalReason,
    SessionState, ShareResponse, SocialAuthVerdict, TrusteeDescriptor, TrusteeReply,
};
pub use sss::{combine, split, Share, SssError};
