import { describe, expect, it } from "vitest";

import {
  UPLOAD_SAMPLE_RATE,
  captureToWav,
  encodeWavPcm16Mono,
  floatToPcm16,
  mixdownMono,
  resampleLinear,
} from "../src/wav.js";
import { parseWav } from "./helpers.js";

describe("mixdownMono", () => {
  it("passes a single channel through unchanged", () => {
    const ch = Float32Array.from([0.1, -0.2, 0.3]);
    expect(Array.from(mixdownMono([ch]))).toEqual(Array.from(ch));
  });

  it("averages channels", () => {
    const left = Float32Array.from([1, 0, -1]);
    const right = Float32Array.from([0, 0, 1]);
    expect(Array.from(mixdownMono([left, right]))).toEqual([0.5, 0, 0]);
  });

  it("rejects mismatched channel lengths", () => {
    expect(() =>
      mixdownMono([new Float32Array(3), new Float32Array(4)]),
    ).toThrow(/mismatch/);
  });
});

describe("resampleLinear", () => {
  it("is the identity at equal rates", () => {
    const s = Float32Array.from([0.5, -0.5, 0.25]);
    expect(Array.from(resampleLinear(s, 48000, 48000))).toEqual(
      Array.from(s),
    );
  });

  it("produces round(n * to/from) samples", () => {
    expect(resampleLinear(new Float32Array(44100), 44100, 48000).length).toBe(
      48000,
    );
    expect(resampleLinear(new Float32Array(8000), 8000, 48000).length).toBe(
      48000,
    );
    expect(
      resampleLinear(new Float32Array(132300), 44100, 48000).length,
    ).toBe(144000);
  });

  it("interpolates between neighbors", () => {
    // Doubling the rate puts midpoints between the originals.
    const out = resampleLinear(Float32Array.from([0, 1]), 1, 2);
    expect(Array.from(out)).toEqual([0, 0.5, 1, 1]);
  });
});

describe("floatToPcm16", () => {
  it("scales and clamps", () => {
    const out = floatToPcm16(Float32Array.from([0, 0.5, -1, 2, -2]));
    expect(Array.from(out)).toEqual([0, 16384, -32767, 32767, -32767]);
  });
});

describe("encodeWavPcm16Mono", () => {
  it("round-trips through a reference parser", () => {
    const samples = Int16Array.from([0, 1000, -1000, 32767, -32768]);
    const wav = encodeWavPcm16Mono(samples, 48000);
    const parsed = parseWav(wav);
    expect(parsed.sampleRate).toBe(48000);
    expect(parsed.channels).toBe(1);
    expect(parsed.bitsPerSample).toBe(16);
    expect(Array.from(parsed.samples)).toEqual(Array.from(samples));
  });

  it("writes exact chunk sizes", () => {
    const wav = encodeWavPcm16Mono(new Int16Array(10), 48000);
    expect(wav.length).toBe(44 + 20);
    const view = new DataView(wav.buffer);
    expect(view.getUint32(4, true)).toBe(36 + 20); // RIFF size
    expect(view.getUint32(40, true)).toBe(20); // data size
  });
});

describe("captureToWav", () => {
  it("conditions 3 s of 44.1 kHz capture to 144000 samples at 48 kHz", () => {
    const n = 3 * 44100;
    const sine = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      sine[i] = 0.5 * Math.sin((2 * Math.PI * 440 * i) / 44100);
    }
    const parsed = parseWav(captureToWav(sine, 44100));
    expect(parsed.sampleRate).toBe(UPLOAD_SAMPLE_RATE);
    expect(parsed.channels).toBe(1);
    expect(parsed.samples.length).toBe(3 * UPLOAD_SAMPLE_RATE);
  });
});
