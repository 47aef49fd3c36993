/** Minimal multipart/form-data encoder.
 *
 * Built by hand rather than with FormData: the app runs under real
 * browsers, jsdom, and node's fetch, and the three disagree about which
 * FormData implementation a given fetch will serialize. Encoding the body
 * ourselves gives one deterministic wire format everywhere.
 */

export interface MultipartPart {
  name: string;
  data: string | Uint8Array;
  filename?: string;
  contentType?: string;
}

export interface MultipartBody {
  contentType: string;
  body: Uint8Array;
}

const encoder = new TextEncoder();

function randomBoundary(): string {
  const bytes = new Uint8Array(12);
  crypto.getRandomValues(bytes);
  let hex = "";
  for (const b of bytes) hex += b.toString(16).padStart(2, "0");
  return `----standin-${hex}`;
}

export function encodeMultipart(parts: MultipartPart[]): MultipartBody {
  const boundary = randomBoundary();
  const chunks: Uint8Array[] = [];
  for (const part of parts) {
    let head = `--${boundary}\r\nContent-Disposition: form-data; name="${part.name}"`;
    if (part.filename !== undefined) head += `; filename="${part.filename}"`;
    head += "\r\n";
    if (part.contentType !== undefined) {
      head += `Content-Type: ${part.contentType}\r\n`;
    }
    head += "\r\n";
    chunks.push(encoder.encode(head));
    chunks.push(
      typeof part.data === "string" ? encoder.encode(part.data) : part.data,
    );
    chunks.push(encoder.encode("\r\n"));
  }
  chunks.push(encoder.encode(`--${boundary}--\r\n`));

  let total = 0;
  for (const c of chunks) total += c.length;
  const body = new Uint8Array(total);
  let at = 0;
  for (const c of chunks) {
    body.set(c, at);
    at += c.length;
  }
  return { contentType: `multipart/form-data; boundary=${boundary}`, body };
}
