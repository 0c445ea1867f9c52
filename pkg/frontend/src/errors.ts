/** Error carrying the engine's numeric error code.
 *
 * Codes follow the CLI exit codes: 2 configuration/validation,
 * 3 container I/O, 4 computation failure.
 */
export class BridgeError extends Error {
  readonly code: number;

  constructor(message: string, code: number) {
    super(message);
    this.name = "BridgeError";
    this.code = code;
  }
}

export function validationError(message: string): BridgeError {
  return new BridgeError(message, 2);
}
