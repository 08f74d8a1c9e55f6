/**
 * Walks per-object view-image directories, embeds every view and every
 * class-name prompt with the pinned model, and assembles an AOVR1
 * container.
 *
 * Expected layout: <imageRoot>/<class_name>/<object_id>/view_{m}_{n}.png
 * with a complete M x N grid per object. The classes file is JSON:
 * [{"name": "...", "split": "base" | "novel"}, ...].
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { PNG } from "pngjs";

import { Container, ClassEntry, ObjectEntry, encodeContainer } from "./aovr.js";
import { EmbeddingModel, PROMPT_TEMPLATE, loadModel, promptFor } from "./model.js";

export interface ClassSpec {
  name: string;
  split: "base" | "novel";
}

export function readClassesFile(file: string): ClassSpec[] {
  const parsed = JSON.parse(fs.readFileSync(file, "utf-8"));
  if (!Array.isArray(parsed) || parsed.length === 0) {
    throw new Error(`classes file ${file} must be a non-empty JSON array`);
  }
  return parsed.map((entry, i) => {
    if (typeof entry.name !== "string" || !["base", "novel"].includes(entry.split)) {
      throw new Error(`classes file entry ${i} needs {name, split: base|novel}`);
    }
    return { name: entry.name, split: entry.split };
  });
}

export function loadImageRgb(file: string): { pixels: Float64Array; width: number; height: number } {
  const png = PNG.sync.read(fs.readFileSync(file));
  const pixels = new Float64Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    pixels[i * 3] = png.data[i * 4] / 255;
    pixels[i * 3 + 1] = png.data[i * 4 + 1] / 255;
    pixels[i * 3 + 2] = png.data[i * 4 + 2] / 255;
  }
  return { pixels, width: png.width, height: png.height };
}

function viewFile(dir: string, m: number, n: number): string | null {
  for (const ext of ["png", "PNG"]) {
    const candidate = path.join(dir, `view_${m}_${n}.${ext}`);
    if (fs.existsSync(candidate)) return candidate;
  }
  return null;
}

export function extractText(classes: ClassSpec[], model: EmbeddingModel): ClassEntry[] {
  if (classes.length === 0) throw new Error("empty class list");
  return classes.map((spec) => ({
    name: spec.name,
    split: spec.split,
    embedding: model.embedText(promptFor(spec.name)),
  }));
}

export function extractGrid(
  imageRoot: string, classesFile: string, modelId: string,
  azimuths: number, elevations: number,
): Container {
  const model = loadModel(modelId);
  const classes = readClassesFile(classesFile);
  const classIndex = new Map(classes.map((c, i) => [c.name, i]));

  const objects: ObjectEntry[] = [];
  const missing: string[] = [];
  for (const spec of classes) {
    const classDir = path.join(imageRoot, spec.name);
    if (!fs.existsSync(classDir)) continue;
    const objectIds = fs.readdirSync(classDir).filter(
      (d) => fs.statSync(path.join(classDir, d)).isDirectory()).sort();
    for (const objectId of objectIds) {
      const objectDir = path.join(classDir, objectId);
      const grid: Float64Array[] = [];
      for (let m = 0; m < azimuths; m++) {
        for (let n = 0; n < elevations; n++) {
          const file = viewFile(objectDir, m, n);
          if (!file) {
            missing.push(`${spec.name}/${objectId}/view_${m}_${n}.png`);
            continue;
          }
          const { pixels, width, height } = loadImageRgb(file);
          grid.push(model.embedImage(pixels, width, height));
        }
      }
      objects.push({
        objectId: `${spec.name}/${objectId}`,
        classIndex: classIndex.get(spec.name)!,
        grid,
      });
    }
  }
  if (missing.length > 0) {
    throw new Error(`incomplete viewing grids; missing ${missing.length} views:\n` +
      missing.join("\n"));
  }
  if (objects.length === 0) {
    throw new Error(`no object directories found under ${imageRoot}`);
  }

  return {
    dim: model.dim,
    azimuths,
    elevations,
    classes: extractText(classes, model),
    objects,
    metadata: {
      extractor: "aovr-extractor/0.1.0",
      model: model.id,
      prompt_template: PROMPT_TEMPLATE,
    },
  };
}

export function writeContainer(container: Container, outFile: string): void {
  fs.mkdirSync(path.dirname(path.resolve(outFile)), { recursive: true });
  fs.writeFileSync(outFile, encodeContainer(container));
}
