/**
 * Bindings for the gr3dkit toolkit.
 *
 * Zero numeric logic lives here: every call shells out to the `gr3dkit`
 * command-line tool and exchanges flat numeric buffers or line-delimited
 * text through its documented file formats, so results are bit-identical
 * to the native CLI. Calls are async and never block the event loop.
 *
 * The executable defaults to `python3 -m gr3dkit`; override with the
 * GR3DKIT_BIN environment variable (e.g. GR3DKIT_BIN="gr3dkit").
 */

import { execFile } from "node:child_process";
import { mkdtemp, readFile, rm, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";

const execFileAsync = promisify(execFile);

export type Matrix = number[][];

export interface CliResult {
  stdout: string;
  stderr: string;
  code: number;
}

export interface EvalOptions {
  kind: "3d" | "2d";
  thresholds?: string; // "start:stop:step"
  jobs?: number;
}

export interface EvalResult {
  /** parsed machine-readable report */
  report: Record<string, unknown>;
  /** exact bytes of the report file, the cross-language contract */
  raw: string;
  /** human-readable AP15/mAP table printed by the CLI */
  table: string;
}

export interface GcotResult {
  report: { a_acc: number; g_acc: number; consistency: number; count: number };
  raw: string;
}

export interface ParseResult {
  tokens: Record<string, unknown>[];
  raw: string;
}

export interface SamplePointsRequest {
  depthPath: string;
  scale?: number;
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  region: [number, number, number, number];
  n?: number;
  seed?: number;
}

function cliCommand(): { cmd: string; prefix: string[] } {
  const bin = process.env.GR3DKIT_BIN;
  if (bin && bin.trim().length > 0) {
    const parts = bin.trim().split(/\s+/);
    return { cmd: parts[0], prefix: parts.slice(1) };
  }
  return { cmd: "python3", prefix: ["-m", "gr3dkit"] };
}

/** Run a raw CLI invocation; non-zero exits resolve (never throw). */
export async function runCli(args: string[]): Promise<CliResult> {
  const { cmd, prefix } = cliCommand();
  try {
    const { stdout, stderr } = await execFileAsync(cmd, [...prefix, ...args], {
      maxBuffer: 256 * 1024 * 1024,
    });
    return { stdout, stderr, code: 0 };
  } catch (err) {
    const e = err as { stdout?: string; stderr?: string; code?: number };
    if (typeof e.code === "number") {
      return { stdout: e.stdout ?? "", stderr: e.stderr ?? "", code: e.code };
    }
    throw err;
  }
}

async function runCliOrThrow(args: string[]): Promise<CliResult> {
  const result = await runCli(args);
  if (result.code !== 0) {
    throw new Error(`gr3dkit ${args[0]} failed (exit ${result.code}): ${result.stderr.trim()}`);
  }
  return result;
}

async function withTempDir<T>(fn: (dir: string) => Promise<T>): Promise<T> {
  const dir = await mkdtemp(join(tmpdir(), "gr3dkit-"));
  try {
    return await fn(dir);
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}

/**
 * Contiguous numeric buffer of box tuples: rows x cols with cols fixed to
 * the 4-number 2D or 9-number 3D layout.
 */
export class BoundArrayView {
  readonly data: Float64Array;
  readonly rows: number;
  readonly cols: 4 | 9;

  constructor(data: Float64Array, rows: number, cols: 4 | 9) {
    if (cols !== 4 && cols !== 9) {
      throw new Error(`box tuples must have 4 or 9 fields, got ${cols}`);
    }
    if (data.length !== rows * cols) {
      throw new Error(
        `buffer of length ${data.length} cannot hold ${rows}x${cols} values`,
      );
    }
    this.data = data;
    this.rows = rows;
    this.cols = cols;
  }

  static fromBoxes(boxes: number[][], cols: 4 | 9): BoundArrayView {
    const data = new Float64Array(boxes.length * cols);
    boxes.forEach((box, i) => {
      if (box.length !== cols) {
        throw new Error(`box ${i} has ${box.length} fields, expected ${cols}`);
      }
      data.set(box, i * cols);
    });
    return new BoundArrayView(data, boxes.length, cols);
  }

  row(i: number): number[] {
    return Array.from(this.data.subarray(i * this.cols, (i + 1) * this.cols));
  }

  /** One JSON array per line: the CLI's box-file wire format. */
  toJsonLines(): string {
    const lines: string[] = [];
    for (let i = 0; i < this.rows; i++) {
      lines.push(JSON.stringify(this.row(i)));
    }
    return lines.length > 0 ? lines.join("\n") + "\n" : "";
  }
}

function asView(boxes: BoundArrayView | number[][], cols: 4 | 9): BoundArrayView {
  if (boxes instanceof BoundArrayView) {
    if (boxes.cols !== cols) {
      throw new Error(`expected ${cols}-field tuples, got ${boxes.cols}`);
    }
    return boxes;
  }
  return BoundArrayView.fromBoxes(boxes, cols);
}

/** Pairwise exact 3D IoU matrix; element [i][j] is bit-identical to the CLI. */
export async function boundIou3d(
  boxesA: BoundArrayView | number[][],
  boxesB: BoundArrayView | number[][],
): Promise<{ matrix: Matrix; raw: string }> {
  const a = asView(boxesA, 9);
  const b = asView(boxesB, 9);
  return withTempDir(async (dir) => {
    const pathA = join(dir, "a.jsonl");
    const pathB = join(dir, "b.jsonl");
    const outPath = join(dir, "matrix.txt");
    await writeFile(pathA, a.toJsonLines());
    await writeFile(pathB, b.toJsonLines());
    await runCliOrThrow(["iou3d", "--boxes-a", pathA, "--boxes-b", pathB, "--out", outPath]);
    const raw = await readFile(outPath, "utf-8");
    const matrix = raw
      .split("\n")
      .filter((line) => line.length > 0)
      .map((line) => JSON.parse(line) as number[]);
    return { matrix, raw };
  });
}

/** Full detection AP protocol over prediction/ground-truth record files. */
export async function boundEvaluate(
  predPath: string,
  gtPath: string,
  options: EvalOptions,
): Promise<EvalResult> {
  const sub = options.kind === "3d" ? "eval3d" : "eval2d";
  return withTempDir(async (dir) => {
    const outPath = join(dir, "report.json");
    const args = [sub, "--pred", predPath, "--gt", gtPath, "--out", outPath];
    if (options.thresholds) {
      args.push("--thresholds", options.thresholds);
    }
    if (options.jobs) {
      args.push("--jobs", String(options.jobs));
    }
    const { stdout } = await runCliOrThrow(args);
    const raw = await readFile(outPath, "utf-8");
    return { report: JSON.parse(raw), raw, table: stdout };
  });
}

/** Grounded-CoT accuracy triple over a record file. */
export async function boundEvaluateGcot(recordsPath: string): Promise<GcotResult> {
  return withTempDir(async (dir) => {
    const outPath = join(dir, "report.json");
    await runCliOrThrow(["eval-gcot", "--records", recordsPath, "--out", outPath]);
    const raw = await readFile(outPath, "utf-8");
    return { report: JSON.parse(raw), raw };
  });
}

/** Tokenize grounding text (lenient unless strict is set). */
export async function boundParse(
  text: string,
  strict = false,
): Promise<ParseResult> {
  return withTempDir(async (dir) => {
    const inPath = join(dir, "input.txt");
    const outPath = join(dir, "tokens.jsonl");
    await writeFile(inPath, text, "utf-8");
    const args = ["parse", "--in", inPath, "--out", outPath];
    if (strict) {
      args.push("--strict");
    }
    await runCliOrThrow(args);
    const raw = await readFile(outPath, "utf-8");
    const tokens = raw
      .split("\n")
      .filter((line) => line.length > 0)
      .map((line) => JSON.parse(line) as Record<string, unknown>);
    return { tokens, raw };
  });
}

/** Render a token list back to canonical grounding text. */
export async function boundSerialize(
  tokens: Record<string, unknown>[],
): Promise<string> {
  return withTempDir(async (dir) => {
    const inPath = join(dir, "tokens.jsonl");
    const outPath = join(dir, "text.txt");
    const lines = tokens.map((t) => JSON.stringify(t)).join("\n");
    await writeFile(inPath, lines.length > 0 ? lines + "\n" : "");
    await runCliOrThrow(["serialize", "--in", inPath, "--out", outPath]);
    return readFile(outPath, "utf-8");
  });
}

/** Sample valid depth pixels in a region and lift them to camera space. */
export async function boundSamplePoints(
  request: SamplePointsRequest,
): Promise<{ points: number[][]; raw: string }> {
  const args = [
    "sample-points",
    "--depth", request.depthPath,
    "--scale", String(request.scale ?? 1.0),
    "--fx", String(request.fx),
    "--fy", String(request.fy),
    "--cx", String(request.cx),
    "--cy", String(request.cy),
    "--region", request.region.join(","),
    "--n", String(request.n ?? 100),
    "--seed", String(request.seed ?? 0),
  ];
  const { stdout } = await runCliOrThrow(args);
  const points = stdout
    .split("\n")
    .filter((line) => line.length > 0)
    .map((line) => JSON.parse(line) as number[]);
  return { points, raw: stdout };
}
