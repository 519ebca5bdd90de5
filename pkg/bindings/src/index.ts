/**
 * Thin wrapper around the vqtok command-line tokenizer.
 *
 * Every call shells out to the CLI, so outputs are byte-identical to direct
 * CLI use by construction. Vocabularies and merge tables are immutable
 * files; a loaded tokenizer is therefore safe to share across concurrent
 * callers, and sampling stays reproducible because the seed travels with
 * each call.
 */

import { spawnSync } from "node:child_process";
import { existsSync } from "node:fs";

export type Triplet = [number, number, number];

export interface TokenPiece {
  /** Decoded subword; raw byte values when the content is not valid UTF-8. */
  subword: string | number[];
  /** Rendered form exactly as the CLI emits it (reversible ASCII escaping). */
  rendered: string;
  triplet: Triplet;
}

export interface VocabularyInfo {
  entries: number;
  codebookSize: number;
  automatonStates: number;
  coversAllBytes: boolean;
}

export interface SampleOptions {
  sigma?: number;
  alphaSplit?: number;
}

const BOW = 256;
const EOW = 257;

function pythonExecutable(): string {
  return process.env.VQTOK_PYTHON ?? "python3";
}

function runCli(args: string[], stdin: string | Buffer = ""): Buffer {
  const result = spawnSync(pythonExecutable(), ["-m", "vqtok.cli", ...args], {
    input: stdin,
    maxBuffer: 1 << 28,
  });
  if (result.error) {
    throw result.error;
  }
  if (result.status !== 0) {
    const message = result.stderr.toString("utf-8").trim();
    throw new Error(message || `vqtok exited with status ${result.status}`);
  }
  return result.stdout;
}

/** Unescape the CLI's rendered symbol string into symbol values. */
export function parseRenderedSymbols(rendered: string): number[] {
  const bytes = Buffer.from(rendered, "utf-8");
  const symbols: number[] = [];
  let i = 0;
  while (i < bytes.length) {
    const b = bytes[i];
    if (b !== 0x5c) {
      symbols.push(b);
      i += 1;
      continue;
    }
    const next = bytes[i + 1];
    if (next === undefined) throw new Error("dangling escape in rendered symbols");
    switch (next) {
      case 0x3c: symbols.push(BOW); i += 2; break; // \<
      case 0x3e: symbols.push(EOW); i += 2; break; // \>
      case 0x5c: symbols.push(0x5c); i += 2; break;
      case 0x3a: symbols.push(0x3a); i += 2; break; // \:
      case 0x5f: symbols.push(0x20); i += 2; break; // \_
      case 0x78: { // \xNN
        symbols.push(parseInt(bytes.subarray(i + 2, i + 4).toString("ascii"), 16));
        i += 4;
        break;
      }
      default:
        throw new Error(`unknown escape \\${String.fromCharCode(next)}`);
    }
  }
  return symbols;
}

function subwordFromSymbols(symbols: number[]): string | number[] {
  const content = symbols.filter((s) => s < 256);
  const buffer = Buffer.from(content);
  const text = buffer.toString("utf-8");
  // invalid sequences surface as byte lists instead of replacement characters
  if (Buffer.compare(Buffer.from(text, "utf-8"), buffer) !== 0) {
    return content;
  }
  return text;
}

function parsePieceToken(token: string): TokenPiece {
  const split = token.lastIndexOf(":");
  if (split < 0) throw new Error(`expected subword:r,g,b, got ${token}`);
  const rendered = token.slice(0, split);
  const triplet = token.slice(split + 1).split(",").map(Number);
  if (triplet.length !== 3 || triplet.some((v) => !Number.isInteger(v))) {
    throw new Error(`bad triplet in ${token}`);
  }
  return {
    rendered,
    subword: subwordFromSymbols(parseRenderedSymbols(rendered)),
    triplet: triplet as Triplet,
  };
}

function parseTokenizeOutput(stdout: Buffer): TokenPiece[][] {
  const text = stdout.toString("utf-8");
  const lines = text.length ? text.replace(/\n$/, "").split("\n") : [];
  return lines.filter((line) => line.length > 0).map((line) => line.split(" ").map(parsePieceToken));
}

export class BoundTokenizer {
  private closed = false;

  private constructor(
    public readonly vocabPath: string,
    public readonly info: VocabularyInfo,
  ) {}

  /** Load and validate a vocabulary file; errors carry the core's message. */
  static load(vocabPath: string): BoundTokenizer {
    if (!existsSync(vocabPath)) {
      throw new Error(`vocabulary file not found: ${vocabPath}`);
    }
    const raw = JSON.parse(
      runCli(["vocab-info", "--vocab", vocabPath, "--format", "json"]).toString("utf-8"),
    );
    return new BoundTokenizer(vocabPath, {
      entries: raw.entries,
      codebookSize: raw.codebook_size,
      automatonStates: raw.automaton_states,
      coversAllBytes: raw.covers_all_bytes,
    });
  }

  private ensureOpen(): void {
    if (this.closed) throw new Error("tokenizer is closed");
  }

  /** Deterministic tokenization: one array of pieces per input word. */
  tokenize(text: string, alphaSplit = 0.1): TokenPiece[][] {
    this.ensureOpen();
    const stdout = runCli(
      ["tokenize", "--vocab", this.vocabPath, "--alpha-split", String(alphaSplit)],
      text,
    );
    return parseTokenizeOutput(stdout);
  }

  /** n sampled tokenizations per word, reproducible for a fixed seed. */
  sample(text: string, n: number, seed: number, options: SampleOptions = {}): TokenPiece[][][] {
    this.ensureOpen();
    if (!Number.isInteger(n) || n < 1) throw new Error("n must be a positive integer");
    const args = [
      "tokenize", "--vocab", this.vocabPath,
      "--samples", String(n), "--seed", String(seed),
      "--sigma-sample", String(options.sigma ?? 0.02),
      "--alpha-split", String(options.alphaSplit ?? 0.1),
    ];
    const flat = parseTokenizeOutput(runCli(args, text));
    const grouped: TokenPiece[][][] = [];
    for (let start = 0; start < flat.length; start += n) {
      grouped.push(flat.slice(start, start + n));
    }
    return grouped;
  }

  /** Inverse lookup: triplets to text (words joined by single spaces). */
  detokenize(triplets: Triplet[]): string {
    this.ensureOpen();
    const stdin = triplets.map((t) => t.join(",")).join(" ");
    const stdout = runCli(["detokenize", "--vocab", this.vocabPath], stdin);
    return stdout.toString("utf-8").replace(/\n$/, "");
  }

  /** Raw CLI text output for byte-level parity checks. */
  tokenizeRaw(text: string, extraArgs: string[] = []): Buffer {
    this.ensureOpen();
    return runCli(["tokenize", "--vocab", this.vocabPath, ...extraArgs], text);
  }

  /** Release the handle; further calls throw. Closing twice is a no-op. */
  close(): void {
    this.closed = true;
  }
}

export class BpeEncoder {
  private constructor(public readonly mergesPath: string) {}

  static load(mergesPath: string): BpeEncoder {
    if (!existsSync(mergesPath)) {
      throw new Error(`merge table not found: ${mergesPath}`);
    }
    return new BpeEncoder(mergesPath);
  }

  /** Encode text; one array of rendered pieces per word. */
  encode(text: string, dropout = 0, seed = 0): string[][] {
    const args = ["bpe-encode", "--merges", this.mergesPath];
    if (dropout > 0) {
      args.push("--dropout", String(dropout), "--seed", String(seed));
    }
    const stdout = runCli(args, text).toString("utf-8");
    const lines = stdout.length ? stdout.replace(/\n$/, "").split("\n") : [];
    return lines.filter((l) => l.length > 0).map((line) => line.split(" "));
  }
}

export function loadTokenizer(vocabPath: string): BoundTokenizer {
  return BoundTokenizer.load(vocabPath);
}
