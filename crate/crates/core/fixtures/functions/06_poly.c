int poly(int x, int y, int z)
{
    int r = 0;
    r = x * y + z - 3;
    r = r * x + y * z;
    return r;
}
