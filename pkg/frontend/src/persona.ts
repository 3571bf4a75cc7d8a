/** Parsing of indexed persona documents back into labeled attributes. */

export interface PersonaAttribute {
  key: string;
  label: string;
}

/** The nine persona attributes, in the order the index stores them. */
export const PERSONA_ATTRIBUTES: readonly PersonaAttribute[] = [
  { key: "name", label: "Name" },
  { key: "role", label: "Role" },
  { key: "number_of_employees", label: "Number of employees" },
  { key: "fleet_size", label: "Fleet size" },
  { key: "short_story", label: "Short story" },
  { key: "what_is_important", label: "What is important" },
  { key: "challenges", label: "Challenges" },
  { key: "expectations", label: "Expectations" },
  { key: "buying_considerations", label: "Buying considerations" },
];

const KNOWN_KEYS = new Set(PERSONA_ATTRIBUTES.map((attribute) => attribute.key));

/** Parse ``key: value`` lines; values keep any further colons. Unrecognized
 * lines are skipped, missing attributes stay absent. */
export function parsePersona(content: string): Map<string, string> {
  const attributes = new Map<string, string>();
  for (const line of content.split("\n")) {
    const split = line.indexOf(":");
    if (split < 0) continue;
    const key = line.slice(0, split).trim();
    if (!KNOWN_KEYS.has(key)) continue;
    attributes.set(key, line.slice(split + 1).trim());
  }
  return attributes;
}

/** Listing query built from attribute-key tokens every persona document
 * contains, so keyword search always surfaces indexed personas. */
export const PERSONA_LIST_QUERY = "name role fleet size challenges expectations buying considerations";
