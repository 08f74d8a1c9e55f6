/**
 * One-time generator for the committed golden image set: 2 classes x
 * 2 objects x 4x4 views of 16x16 PNGs. Class "blob" renders a filled disc,
 * class "bars" renders stripes; view indices modulate geometry so every
 * view differs deterministically.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { PNG } from "pngjs";

const ROOT = path.join(import.meta.dirname ?? ".", "..", "testdata", "images");

function writeView(dir: string, m: number, n: number,
                   painter: (x: number, y: number, m: number, n: number) => [number, number, number]): void {
  const png = new PNG({ width: 16, height: 16 });
  for (let y = 0; y < 16; y++) {
    for (let x = 0; x < 16; x++) {
      const [r, g, b] = painter(x, y, m, n);
      const idx = (y * 16 + x) * 4;
      png.data[idx] = r;
      png.data[idx + 1] = g;
      png.data[idx + 2] = b;
      png.data[idx + 3] = 255;
    }
  }
  fs.mkdirSync(dir, { recursive: true });
  fs.writeFileSync(path.join(dir, `view_${m}_${n}.png`), PNG.sync.write(png));
}

function blobPainter(shift: number) {
  return (x: number, y: number, m: number, n: number): [number, number, number] => {
    const cx = 4 + m * 2 + shift;
    const cy = 4 + n * 2;
    const d2 = (x - cx) ** 2 + (y - cy) ** 2;
    const inside = d2 <= 16;
    return inside ? [220, 60 + 10 * m, 40 + 10 * n] : [18, 18, 28];
  };
}

function barsPainter(shift: number) {
  return (x: number, y: number, m: number, n: number): [number, number, number] => {
    const on = (x + m + shift) % 4 < 2 !== (y + n) % 6 < 3;
    return on ? [40, 200, 120 + 5 * m] : [240, 240, 30 + 5 * n];
  };
}

for (const [cls, painterOf] of [["blob", blobPainter], ["bars", barsPainter]] as const) {
  for (let obj = 0; obj < 2; obj++) {
    const dir = path.join(ROOT, cls, `obj${obj}`);
    for (let m = 0; m < 4; m++) {
      for (let n = 0; n < 4; n++) {
        writeView(dir, m, n, painterOf(obj));
      }
    }
  }
}

// duplicate image case: object blob/obj0 cell (0,0) copied into (3,3)
const dupSrc = path.join(ROOT, "blob", "obj0", "view_0_0.png");
fs.copyFileSync(dupSrc, path.join(ROOT, "blob", "obj0", "view_3_3.png"));

fs.writeFileSync(path.join(ROOT, "..", "classes.json"), JSON.stringify([
  { name: "blob", split: "base" },
  { name: "bars", split: "novel" },
], null, 2) + "\n");

console.log("wrote golden image set under", ROOT);
