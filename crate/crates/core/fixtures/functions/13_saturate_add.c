long long saturate_add(long long a, long long b)
{
    long long limit = 1000000;
    long long s;
    if (a > limit || a < -limit)
        return 0;
    if (b > limit || b < -limit)
        return 0;
    s = a + b;
    if (s > limit && a > 0)
        s = limit;
    return s;
}
