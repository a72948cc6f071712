export interface BreakdownEntry {
  field: string;
  distance: number;
  weight: number;
  contribution: number;
}

export interface Hit {
  id: number;
  distance: number;
  fields: Record<string, string>;
  breakdown: BreakdownEntry[];
  explanation: string;
}

export interface StructuredQueryEcho {
  values: Record<string, string | number>;
  weights: Record<string, number>;
}

export interface RerankMeta {
  used: boolean;
  fallback: boolean;
}

export interface Timings {
  structure_ms: number;
  search_ms: number;
  rerank_ms: number;
  total_ms: number;
}

export interface QueryResponse {
  structured_query: StructuredQueryEcho;
  hits: Hit[];
  rerank: RerankMeta;
  timings?: Timings;
}

export interface FieldSpec {
  name: string;
  kind: 'numeric' | 'boolean' | 'categorical';
  weight: number;
  allow_missing: boolean;
}

export interface SchemaResponse {
  id_field: string | null;
  fields: FieldSpec[];
}
