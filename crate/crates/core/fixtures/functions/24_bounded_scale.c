#define LIMIT 1000000

long long bounded_scale(long long v, int shift)
{
    long long out;
    long long scale;
    if (shift < 0 || shift > 8)
        shift = 0;
    scale = 1 << shift;
    out = v;
    if (out > LIMIT || out < -LIMIT)
        return 0;
    out *= scale;
    return out;
}
