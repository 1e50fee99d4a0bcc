/** Wire protocol helpers: canonical one-line JSON framing and the fixed
 * error strings from the toolkit's PROTOCOL.md.
 */

export function canonicalJson(obj: unknown): string {
  if (obj === null || typeof obj !== "object" || Array.isArray(obj)) {
    if (Array.isArray(obj)) {
      return `[${obj.map(canonicalJson).join(",")}]`;
    }
    return JSON.stringify(obj);
  }
  const entries = Object.entries(obj as Record<string, unknown>)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([k, v]) => `${JSON.stringify(k)}:${canonicalJson(v)}`);
  return `{${entries.join(",")}}`;
}

export function encodeLine(obj: unknown): string {
  return canonicalJson(obj) + "\n";
}

export function errorResponse(id: number, message: string): object {
  return { error: message, id };
}

export const ERR_MALFORMED = "malformed json";
export const ERR_MISSING_ID = "missing id";
export const ERR_UNKNOWN_OP = "unknown op";
export const ERR_BAD_PNG = "bad png payload";
export const ERR_BAD_SIZE = "unsupported output size";

export function missingField(name: string): string {
  return `missing field: ${name}`;
}
