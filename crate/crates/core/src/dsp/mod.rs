//! Hand-crafted speech descriptors computed from raw waveforms: MFCCs plus
//! short-term energy and zero-crossing rate.

mod frames;
mod mel;
mod wav;

pub use frames::{
    extract_lld_bundle, frame_signal, short_term_energy, zero_crossing_rate, FrameConfig, Waveform,
    Window,
};
pub use mel::{
    dct_matrix, hz_to_mel, mel_energies, mel_to_hz, mfcc, pre_emphasis, MelConfig, MelFilterbank,
    PRE_EMPHASIS,
};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav};
