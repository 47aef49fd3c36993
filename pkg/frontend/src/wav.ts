/** Client-side audio conditioning for comment capture.
 *
 * The server accepts exactly one format — 48 kHz, mono, 16-bit PCM WAV —
 * so whatever the microphone hands us (any rate, any channel count) gets
 * mixed down and resampled here before upload.
 */

export const UPLOAD_SAMPLE_RATE = 48_000;

/** Average any number of equal-length channels into one. */
export function mixdownMono(channels: Float32Array[]): Float32Array {
  if (channels.length === 0) return new Float32Array(0);
  if (channels.length === 1) return Float32Array.from(channels[0]);
  const n = channels[0].length;
  const out = new Float32Array(n);
  for (const ch of channels) {
    if (ch.length !== n) throw new Error("channel length mismatch");
    for (let i = 0; i < n; i++) out[i] += ch[i];
  }
  const inv = 1 / channels.length;
  for (let i = 0; i < n; i++) out[i] *= inv;
  return out;
}

/** Linear-interpolation resampler; output length is round(n · to/from). */
export function resampleLinear(
  samples: Float32Array,
  fromRate: number,
  toRate: number,
): Float32Array {
  if (fromRate <= 0 || toRate <= 0) throw new Error("bad sample rate");
  if (fromRate === toRate) return Float32Array.from(samples);
  const outLen = Math.round((samples.length * toRate) / fromRate);
  const out = new Float32Array(outLen);
  if (samples.length === 0) return out;
  const step = fromRate / toRate;
  const last = samples.length - 1;
  for (let i = 0; i < outLen; i++) {
    const pos = i * step;
    const lo = Math.min(Math.floor(pos), last);
    const hi = Math.min(lo + 1, last);
    const frac = pos - lo;
    out[i] = samples[lo] * (1 - frac) + samples[hi] * frac;
  }
  return out;
}

export function floatToPcm16(samples: Float32Array): Int16Array {
  const out = new Int16Array(samples.length);
  for (let i = 0; i < samples.length; i++) {
    const clamped = Math.max(-1, Math.min(1, samples[i]));
    out[i] = Math.round(clamped * 32767);
  }
  return out;
}

/** RIFF/WAVE container around mono 16-bit PCM. */
export function encodeWavPcm16Mono(
  samples: Int16Array,
  sampleRate: number,
): Uint8Array {
  const dataBytes = samples.length * 2;
  const buf = new ArrayBuffer(44 + dataBytes);
  const view = new DataView(buf);
  const ascii = (at: number, s: string) => {
    for (let i = 0; i < s.length; i++) view.setUint8(at + i, s.charCodeAt(i));
  };
  ascii(0, "RIFF");
  view.setUint32(4, 36 + dataBytes, true);
  ascii(8, "WAVE");
  ascii(12, "fmt ");
  view.setUint32(16, 16, true); // PCM fmt chunk size
  view.setUint16(20, 1, true); // PCM
  view.setUint16(22, 1, true); // mono
  view.setUint32(24, sampleRate, true);
  view.setUint32(28, sampleRate * 2, true); // byte rate
  view.setUint16(32, 2, true); // block align
  view.setUint16(34, 16, true); // bits per sample
  ascii(36, "data");
  view.setUint32(40, dataBytes, true);
  for (let i = 0; i < samples.length; i++) {
    view.setInt16(44 + i * 2, samples[i], true);
  }
  return new Uint8Array(buf);
}

/** Mic samples at an arbitrary rate -> upload-ready WAV bytes. */
export function captureToWav(
  samples: Float32Array,
  sampleRate: number,
): Uint8Array {
  const at48k = resampleLinear(samples, sampleRate, UPLOAD_SAMPLE_RATE);
  return encodeWavPcm16Mono(floatToPcm16(at48k), UPLOAD_SAMPLE_RATE);
}
