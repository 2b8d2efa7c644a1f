long power(long b, int e)
{
    long r = 1;
    if (e < 0)
        return 0;
    if (e > 12)
        e = 12;
    while (e > 0) {
        r *= b;
        e--;
    }
    return r;
}
