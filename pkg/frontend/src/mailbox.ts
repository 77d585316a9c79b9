/** Latest-wins mailbox decoupling message handling from rendering.
 *
 * The socket handler puts every validated frame; the animation loop takes
 * at most one per tick. Overwritten frames are counted so the HUD can show
 * how far rendering lags behind the feed (they are not lost data: the
 * newest frame supersedes older ones by contract).
 */

export class Mailbox<T> {
  private item: T | null = null;
  private overwritten = 0;

  put(value: T): void {
    if (this.item !== null) this.overwritten += 1;
    this.item = value;
  }

  take(): T | null {
    const value = this.item;
    this.item = null;
    return value;
  }

  get skipped(): number {
    return this.overwritten;
  }
}
