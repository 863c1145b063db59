/**
 * Parser for the DOT dialect the pipeline emits for its state machines:
 * one digraph, node statements with attribute lists, edge statements with
 * `action/obs:prob` labels. Covers the common Graphviz surface (comments,
 * quoted ids, attribute defaults, edge chains) and rejects everything else
 * with a position-stamped DotError.
 */

export class DotError extends Error {}

export interface DotNode {
  id: string;
  attrs: Record<string, string>;
}

export interface DotEdge {
  from: string;
  to: string;
  attrs: Record<string, string>;
}

export interface DotGraph {
  name: string | null;
  directed: boolean;
  nodes: DotNode[];
  edges: DotEdge[];
}

interface Token {
  kind: "id" | "punct";
  value: string;
  line: number;
  col: number;
}

const PUNCT = new Set(["{", "}", "[", "]", ";", ",", "="]);

function tokenize(text: string): Token[] {
  const tokens: Token[] = [];
  let i = 0;
  let line = 1;
  let col = 1;

  const bump = (n: number) => {
    for (let k = 0; k < n; k++) {
      if (text[i + k] === "\n") {
        line += 1;
        col = 1;
      } else {
        col += 1;
      }
    }
    i += n;
  };

  while (i < text.length) {
    const c = text[i];
    if (c === " " || c === "\t" || c === "\r" || c === "\n") {
      bump(1);
      continue;
    }
    if (c === "#" || (c === "/" && text[i + 1] === "/")) {
      const end = text.indexOf("\n", i);
      bump((end === -1 ? text.length : end) - i);
      continue;
    }
    if (c === "/" && text[i + 1] === "*") {
      const end = text.indexOf("*/", i + 2);
      if (end === -1) throw new DotError(`${line}:${col}: unterminated comment`);
      bump(end + 2 - i);
      continue;
    }
    if (c === "-" && (text[i + 1] === ">" || text[i + 1] === "-")) {
      tokens.push({ kind: "punct", value: text.slice(i, i + 2), line, col });
      bump(2);
      continue;
    }
    if (PUNCT.has(c)) {
      tokens.push({ kind: "punct", value: c, line, col });
      bump(1);
      continue;
    }
    if (c === '"') {
      let j = i + 1;
      let value = "";
      while (j < text.length && text[j] !== '"') {
        if (text[j] === "\\" && j + 1 < text.length) {
          value += text[j + 1];
          j += 2;
        } else {
          value += text[j];
          j += 1;
        }
      }
      if (j >= text.length) throw new DotError(`${line}:${col}: unterminated string`);
      tokens.push({ kind: "id", value, line, col });
      bump(j + 1 - i);
      continue;
    }
    const m = /^[A-Za-z0-9_.+-]+/.exec(text.slice(i));
    if (m) {
      tokens.push({ kind: "id", value: m[0], line, col });
      bump(m[0].length);
      continue;
    }
    throw new DotError(`${line}:${col}: unexpected character ${JSON.stringify(c)}`);
  }
  return tokens;
}

class Parser {
  private pos = 0;

  constructor(private tokens: Token[]) {}

  private peek(): Token | undefined {
    return this.tokens[this.pos];
  }

  private next(): Token {
    const t = this.tokens[this.pos];
    if (t === undefined) throw new DotError("unexpected end of input");
    this.pos += 1;
    return t;
  }

  private expect(value: string): Token {
    const t = this.next();
    if (t.value !== value) {
      throw new DotError(`${t.line}:${t.col}: expected ${JSON.stringify(value)}, got ${JSON.stringify(t.value)}`);
    }
    return t;
  }

  private atPunct(value: string): boolean {
    const t = this.peek();
    return t !== undefined && t.kind === "punct" && t.value === value;
  }

  parse(): DotGraph {
    let t = this.next();
    if (t.kind === "id" && t.value === "strict") t = this.next();
    if (t.kind !== "id" || (t.value !== "digraph" && t.value !== "graph")) {
      throw new DotError(`${t.line}:${t.col}: expected "digraph" or "graph"`);
    }
    const directed = t.value === "digraph";
    let name: string | null = null;
    if (!this.atPunct("{")) {
      const n = this.next();
      if (n.kind !== "id") throw new DotError(`${n.line}:${n.col}: expected graph name`);
      name = n.value;
    }
    this.expect("{");

    const graph: DotGraph = { name, directed, nodes: [], edges: [] };
    const byId = new Map<string, DotNode>();
    const declare = (id: string): DotNode => {
      let node = byId.get(id);
      if (node === undefined) {
        node = { id, attrs: {} };
        byId.set(id, node);
        graph.nodes.push(node);
      }
      return node;
    };

    while (!this.atPunct("}")) {
      const head = this.next();
      if (head.kind !== "id") {
        throw new DotError(`${head.line}:${head.col}: expected a statement, got ${JSON.stringify(head.value)}`);
      }
      if (head.value === "node" || head.value === "edge" || head.value === "graph") {
        // attribute defaults apply to Graphviz layout, not to the machine
        this.parseAttrList();
      } else if (this.atPunct("=")) {
        this.next();
        const v = this.next();
        if (v.kind !== "id") throw new DotError(`${v.line}:${v.col}: expected attribute value`);
      } else if (this.atPunct("->") || this.atPunct("--")) {
        const chain = [head.value];
        while (this.atPunct("->") || this.atPunct("--")) {
          const arrow = this.next();
          if (directed && arrow.value !== "->") {
            throw new DotError(`${arrow.line}:${arrow.col}: "--" inside a digraph`);
          }
          const target = this.next();
          if (target.kind !== "id") {
            throw new DotError(`${target.line}:${target.col}: expected edge target`);
          }
          chain.push(target.value);
        }
        const attrs = this.atPunct("[") ? this.parseAttrList() : {};
        for (let k = 0; k + 1 < chain.length; k++) {
          declare(chain[k]);
          declare(chain[k + 1]);
          graph.edges.push({ from: chain[k], to: chain[k + 1], attrs: { ...attrs } });
        }
      } else {
        const node = declare(head.value);
        if (this.atPunct("[")) Object.assign(node.attrs, this.parseAttrList());
      }
      if (this.atPunct(";")) this.next();
    }
    this.expect("}");
    const trailing = this.peek();
    if (trailing !== undefined) {
      throw new DotError(`${trailing.line}:${trailing.col}: trailing content after graph`);
    }
    return graph;
  }

  private parseAttrList(): Record<string, string> {
    this.expect("[");
    const attrs: Record<string, string> = {};
    while (!this.atPunct("]")) {
      const key = this.next();
      if (key.kind !== "id") throw new DotError(`${key.line}:${key.col}: expected attribute name`);
      this.expect("=");
      const value = this.next();
      if (value.kind !== "id") throw new DotError(`${value.line}:${value.col}: expected attribute value`);
      attrs[key.value] = value.value;
      if (this.atPunct(",") || this.atPunct(";")) this.next();
    }
    this.expect("]");
    return attrs;
  }
}

export function parseDot(text: string): DotGraph {
  return new Parser(tokenize(text)).parse();
}

/** Transition annotation on a machine edge. */
export interface EdgeLabel {
  action: string;
  obs: string;
  prob: number;
}

/**
 * Parse an `action/obs:prob` edge label; whitespace around the separators
 * is accepted. Returns null when the label has a different shape.
 */
export function parseEdgeLabel(label: string): EdgeLabel | null {
  const m = /^\s*(\S+?)\s*\/\s*(\S+?)\s*:\s*([0-9.eE+-]+)\s*$/.exec(label);
  if (m === null) return null;
  const prob = Number(m[3]);
  if (!Number.isFinite(prob) || prob < 0) return null;
  return { action: m[1], obs: m[2], prob };
}
