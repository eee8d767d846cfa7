// Minimal binary PPM (P6) / PGM (P5) decoder; the service serves frames and
// crop evidence in these formats and browsers cannot render them natively.

export interface DecodedImage {
  width: number;
  height: number;
  rgba: Uint8ClampedArray<ArrayBuffer>;
}

export function decodePnm(buffer: ArrayBuffer): DecodedImage {
  const bytes = new Uint8Array(buffer);
  if (bytes.length < 2) throw new Error("not a PNM image");
  const magic = String.fromCharCode(bytes[0]!, bytes[1]!);
  if (magic !== "P5" && magic !== "P6") throw new Error(`unsupported magic ${magic}`);
  const channels = magic === "P6" ? 3 : 1;

  let pos = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (pos < bytes.length && isSpace(bytes[pos]!)) pos += 1;
    if (bytes[pos] === 0x23) {
      while (pos < bytes.length && bytes[pos] !== 0x0a) pos += 1;
      continue;
    }
    let start = pos;
    while (pos < bytes.length && !isSpace(bytes[pos]!)) pos += 1;
    if (start === pos) throw new Error("truncated PNM header");
    fields.push(Number(ascii(bytes, start, pos)));
  }
  pos += 1; // single whitespace after maxval
  const [width, height, maxval] = fields as [number, number, number];
  if (maxval !== 255) throw new Error(`unsupported maxval ${maxval}`);
  const expected = width * height * channels;
  if (bytes.length - pos < expected) throw new Error("truncated PNM payload");

  const rgba = new Uint8ClampedArray(new ArrayBuffer(width * height * 4));
  for (let i = 0; i < width * height; i += 1) {
    const src = pos + i * channels;
    const r = bytes[src]!;
    rgba[i * 4] = r;
    rgba[i * 4 + 1] = channels === 3 ? bytes[src + 1]! : r;
    rgba[i * 4 + 2] = channels === 3 ? bytes[src + 2]! : r;
    rgba[i * 4 + 3] = 255;
  }
  return { width, height, rgba };
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

function ascii(bytes: Uint8Array, start: number, end: number): string {
  let out = "";
  for (let i = start; i < end; i += 1) out += String.fromCharCode(bytes[i]!);
  return out;
}

/** Draw a decoded image onto a canvas, scaled to fit. Best-effort: test DOMs
 * without a 2D context are tolerated. */
export function drawOnCanvas(canvas: HTMLCanvasElement, image: DecodedImage): void {
  canvas.width = image.width;
  canvas.height = image.height;
  const ctx = canvas.getContext("2d");
  if (!ctx || typeof ctx.putImageData !== "function") return;
  const data = new ImageData(image.rgba, image.width, image.height);
  ctx.putImageData(data, 0, 0);
}
