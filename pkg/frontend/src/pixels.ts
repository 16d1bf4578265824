/** Pixel-side helpers. The service owns all restoration math; the
 * client only reads image metadata for captions and computes the
 * optional PSNR readout when a ground-truth image is known. Displayed
 * pixels are always the service's bytes, untouched. */

export interface Dims {
  width: number;
  height: number;
}

export function base64ToBytes(b64: string): Uint8Array {
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

/** Read width/height straight from the PNG IHDR chunk; the first
 * 8 bytes are the signature, IHDR always follows at offset 16. */
export function pngDims(bytes: Uint8Array): Dims {
  if (bytes.length < 24) throw new Error("not a PNG: too short");
  const sig = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== sig[i]) throw new Error("not a PNG: bad signature");
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  return { width: view.getUint32(16), height: view.getUint32(20) };
}

export function pngDimsFromBase64(b64: string): Dims {
  return pngDims(base64ToBytes(b64));
}

export interface Pixels extends Dims {
  /** RGBA, 4 bytes per pixel, row-major. */
  data: Uint8ClampedArray;
}

/** PSNR in dB between two same-sized RGBA buffers, alpha ignored,
 * on the 0-255 scale. Infinity for identical images. */
export function psnr(a: Pixels, b: Pixels): number {
  if (a.width !== b.width || a.height !== b.height) {
    throw new Error(
      `size mismatch: ${a.width}x${a.height} vs ${b.width}x${b.height}`,
    );
  }
  let sum = 0;
  let count = 0;
  for (let i = 0; i < a.data.length; i += 4) {
    for (let c = 0; c < 3; c++) {
      const d = a.data[i + c] - b.data[i + c];
      sum += d * d;
      count++;
    }
  }
  if (sum === 0) return Infinity;
  return 10 * Math.log10((255 * 255 * count) / sum);
}

export type PixelDecoder = (b64: string) => Promise<Pixels | null>;

/** Decode a base64 PNG to raw RGBA via an offscreen canvas. Returns
 * null where the DOM cannot rasterize (headless test environments);
 * callers hide the PSNR readout in that case. */
export const canvasDecoder: PixelDecoder = (b64) =>
  new Promise((resolve) => {
    const img = new Image();
    img.onload = () => {
      const canvas = document.createElement("canvas");
      canvas.width = img.naturalWidth;
      canvas.height = img.naturalHeight;
      const ctx = canvas.getContext("2d");
      if (!ctx) {
        resolve(null);
        return;
      }
      ctx.drawImage(img, 0, 0);
      const data = ctx.getImageData(0, 0, canvas.width, canvas.height);
      resolve({ width: data.width, height: data.height, data: data.data });
    };
    img.onerror = () => resolve(null);
    img.src = "data:image/png;base64," + b64;
  });
